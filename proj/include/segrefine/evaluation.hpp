// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segrefine/types.hpp"

namespace segrefine {

/// argmax over class maps; background (0) where the max is below tau_bg; ties go to the lowest id.
ClassIndexMask assemble_class_mask(const std::map<std::uint8_t, SoftMask>& class_maps, float tau_bg);

struct ClassCounts {
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;

    ClassCounts& operator+=(const ClassCounts& o) {
        intersection += o.intersection;
        union_ += o.union_;
        return *this;
    }
    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

/// Counts for class c; pixels whose ground truth is the ignore label are skipped.
ClassCounts class_counts(const ClassIndexMask& pred, const ClassIndexMask& gt, std::uint8_t c);

/// |pred=c and gt=c| / |pred=c or gt=c|; nullopt when the union is empty.
std::optional<double> iou(const ClassIndexMask& pred, const ClassIndexMask& gt, std::uint8_t c);

struct IoUReport {
    std::size_t num_classes = 0;
    std::vector<ClassCounts> counts;
    /// nullopt for classes with an empty union; those are left out of the mean.
    std::vector<std::optional<double>> per_class_iou;
    double mean_iou = 0.0;

    nlohmann::ordered_json to_json(const std::vector<std::string>& class_names = {}) const;
    std::string to_table(const std::vector<std::string>& class_names = {}) const;
};

/// Accumulates counts per class over all samples, then averages IoU over classes with a non-empty union.
IoUReport mean_iou(std::span<const ClassIndexMask> preds, std::span<const ClassIndexMask> gts,
                   std::size_t num_classes);

/// Report from already-accumulated counts (order-independent merge of partial sums).
IoUReport iou_report_from_counts(std::vector<ClassCounts> counts);

/**
 * Per-sample foreground IoU in percent: pixels where pred == gt != 0 over
 * pixels where either is foreground. 100 when both are empty.
 */
double sample_foreground_iou(const ClassIndexMask& pred, const ClassIndexMask& gt);

struct GainBand {
    double low = 0.0;   // inclusive
    double high = 0.0;  // exclusive, except for the last band which includes 100
};

inline const std::vector<GainBand>& default_gain_bands() {
    static const std::vector<GainBand> bands{{0, 40}, {40, 80}, {80, 100}};
    return bands;
}

enum class GainAveraging {
    kPerSample,    // mean of per-sample (refined - initial)
    kAccumulated,  // band-level accumulated IoU, refined minus initial
};

struct StratifiedGainReport {
    struct Band {
        GainBand range;
        std::size_t sample_count = 0;
        double mean_initial = 0.0;
        double mean_refined = 0.0;
        double mean_gain = 0.0;
    };
    std::vector<Band> bands;
    std::size_t total_samples = 0;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

/// Buckets samples by initial foreground IoU and reports the mean gain per band (percentage points).
StratifiedGainReport stratified_gain(std::span<const ClassIndexMask> initial,
                                     std::span<const ClassIndexMask> refined,
                                     std::span<const ClassIndexMask> gts,
                                     const std::vector<GainBand>& bands = default_gain_bands(),
                                     GainAveraging averaging = GainAveraging::kPerSample);

/// Band index for a per-sample IoU in percent.
std::size_t band_index(double iou_percent, const std::vector<GainBand>& bands);

}  // namespace segrefine
