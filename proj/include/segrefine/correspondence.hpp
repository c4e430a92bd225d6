// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segrefine/recorded.hpp"
#include "segrefine/types.hpp"

namespace segrefine {

/// h x w grid of d-dimensional pixel features, row-major.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(std::size_t height, std::size_t width, std::size_t dim, std::vector<float> data,
               bool normalized = false);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t dim() const { return dim_; }
    std::size_t pixel_count() const { return height_ * width_; }
    bool normalized() const { return normalized_; }
    std::span<const float> data() const { return data_; }
    std::span<const float> pixel(std::size_t j) const { return {data_.data() + j * dim_, dim_}; }

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
    bool normalized_ = false;
};

FeatureMap feature_map_from_tensor(const Tensor& t);

/// Divides every pixel vector by max(||v||, eps). Zero vectors stay zero.
FeatureMap normalize_features(const FeatureMap& fm, float eps = 1e-8f);

/// For each generated pixel j, the index of its best-matching original pixel.
struct CorrespondenceMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint32_t> index;

    friend bool operator==(const CorrespondenceMap&, const CorrespondenceMap&) = default;
};

/**
 * delta_j = argmin_j' (1 - <orig[j'], gen[j]>), lowest j' on ties.
 * Both maps must be normalized and share h, w and d.
 */
CorrespondenceMap find_correspondence_bruteforce(const FeatureMap& original,
                                                 const FeatureMap& generated);

/// Tiled search with the same arithmetic as the brute force; identical output for any worker count.
CorrespondenceMap find_correspondence(const FeatureMap& original, const FeatureMap& generated,
                                      std::size_t workers = 1);

struct MixConfig {
    float beta = 0.8f;
    float cf_low = 0.2f;
    float cf_high = 0.6f;

    /// Throws std::invalid_argument unless 0 <= beta <= 1 and 0 <= cf_low <= cf_high <= 1.
    void validate() const;
};

/**
 * S*[j] = beta S[j] + (1 - beta) S[delta_j] for pixels with S[j] in
 * [cf_low, cf_high]; other pixels are copied. For filtered pixels with
 * beta < 1 the update never rounds away its direction: S*[j] moves toward
 * S[delta_j] whenever the two differ.
 */
SoftMask mix_probabilities(const SoftMask& mask, const CorrespondenceMap& delta,
                           const MixConfig& cfg);

/// Identifies which image an extractor is embedding (used by recorded features).
struct FeatureKey {
    std::string sample_id;
    std::string class_name;               // empty for the original image
    std::optional<std::size_t> timestep;  // generation timestep, if any
    bool generated = false;
};

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual FeatureMap embed(const ImageTensor& img, const FeatureKey& key) const = 0;
};

/**
 * Per-pixel [channels..., w_pos * x / (W-1), w_pos * y / (H-1)], L2-normalised.
 * The image is first resampled (nearest) to the declared grid; a zero grid
 * means the image's own resolution.
 */
class ToyFeatureExtractor final : public FeatureExtractor {
public:
    explicit ToyFeatureExtractor(float pos_weight = 0.25f, std::size_t grid_h = 0,
                                 std::size_t grid_w = 0);
    FeatureMap embed(const ImageTensor& img, const FeatureKey& key) const override;

private:
    float pos_weight_;
    std::size_t grid_h_;
    std::size_t grid_w_;
};

/// Loads feat_orig / feat_gen_<class> records; the image argument is ignored.
class RecordedFeatureExtractor final : public FeatureExtractor {
public:
    explicit RecordedFeatureExtractor(std::shared_ptr<const RecordedRun> run);
    FeatureMap embed(const ImageTensor& img, const FeatureKey& key) const override;

private:
    std::shared_ptr<const RecordedRun> run_;
};

struct Refinement {
    SoftMask mask;                     // refined, at the input mask resolution
    CorrespondenceMap correspondence;  // on the feature grid
    SoftMask feature_mask;             // input mask resampled to the feature grid
    SoftMask feature_refined;          // mixed mask on the feature grid
};

/// Mixing on already-normalized features. mask is resampled to the feature grid and back.
Refinement refine_with_features(const FeatureMap& original, const FeatureMap& generated,
                                const SoftMask& mask, const MixConfig& cfg,
                                std::size_t workers = 1);

Refinement refine_mask(const ImageTensor& image, const ImageTensor& generated,
                       const SoftMask& mask, const FeatureExtractor& extractor,
                       const MixConfig& cfg, const FeatureKey& original_key = {},
                       const FeatureKey& generated_key = {.generated = true});

/**
 * Independent refinement per class. Every class with a non-zero coarse map
 * needs a generated image; all-zero maps are returned unchanged.
 * The original image is embedded once and shared.
 */
std::map<std::string, Refinement> refine_all_classes(
    const ImageTensor& image, const std::map<std::string, ImageTensor>& generated,
    const std::map<std::string, SoftMask>& coarse, const FeatureExtractor& extractor,
    const MixConfig& cfg, const std::string& sample_id = {},
    std::optional<std::size_t> timestep = std::nullopt);

enum class PixelMetric { kCosine, kEuclidean };

/// Cosine: 1 - <a, b> (0 for identical vectors); Euclidean: ||a - b||.
double pixel_distance(std::span<const float> a, std::span<const float> b, PixelMetric metric);

/// sup over a in A of inf over b in B of D(a, b).
double hausdorff_distance(const FeatureMap& a, const FeatureMap& b,
                          PixelMetric metric = PixelMetric::kCosine);

/// Sum over a in A of inf over b in B of D(a, b). With A = generated and
/// B = original this is the summed best-match distance of the correspondence search.
double directed_sum_distance(const FeatureMap& a, const FeatureMap& b,
                             PixelMetric metric = PixelMetric::kCosine);

}  // namespace segrefine
