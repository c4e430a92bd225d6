// SPDX-License-Identifier: Apache-2.0
#include "segrefine/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace segrefine {

namespace {

void require_same_dims(const ClassIndexMask& a, const ClassIndexMask& b) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw std::invalid_argument("masks differ in size: " + std::to_string(a.height()) + "x" +
                                    std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                                    "x" + std::to_string(b.width()));
    }
}

std::string class_label(const std::vector<std::string>& names, std::size_t c) {
    return c < names.size() ? names[c] : "class_" + std::to_string(c);
}

std::string fixed(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

void validate_bands(const std::vector<GainBand>& bands) {
    if (bands.empty()) throw std::invalid_argument("stratified_gain: no bands");
    if (bands.front().low != 0.0 || bands.back().high != 100.0) {
        throw std::invalid_argument("stratified_gain: bands must cover [0, 100]");
    }
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (!(bands[i].low < bands[i].high)) throw std::invalid_argument("stratified_gain: empty band");
        if (i + 1 < bands.size() && bands[i].high != bands[i + 1].low) {
            throw std::invalid_argument("stratified_gain: bands must be contiguous");
        }
    }
}

}  // namespace

ClassIndexMask assemble_class_mask(const std::map<std::uint8_t, SoftMask>& class_maps, float tau_bg) {
    if (class_maps.empty()) throw std::invalid_argument("assemble_class_mask: empty class set");
    const auto& first = class_maps.begin()->second;
    for (const auto& [id, m] : class_maps) {
        if (id == 0 || id == kIgnoreLabel) {
            throw std::invalid_argument("assemble_class_mask: class id " + std::to_string(id) + " is reserved");
        }
        if (m.height() != first.height() || m.width() != first.width()) {
            throw std::invalid_argument("assemble_class_mask: class maps differ in size");
        }
    }
    ClassIndexMask out(first.height(), first.width(), 0);
    for (std::size_t j = 0; j < out.size(); ++j) {
        float best = -1.0f;
        std::uint8_t label = 0;
        for (const auto& [id, m] : class_maps) {  // ascending id; strict '>' keeps the lowest on ties
            if (m[j] > best) {
                best = m[j];
                label = id;
            }
        }
        out.set(j, best >= tau_bg ? label : 0);
    }
    return out;
}

ClassCounts class_counts(const ClassIndexMask& pred, const ClassIndexMask& gt, std::uint8_t c) {
    require_same_dims(pred, gt);
    ClassCounts counts;
    for (std::size_t j = 0; j < gt.size(); ++j) {
        if (gt[j] == kIgnoreLabel) continue;
        const bool p = pred[j] == c;
        const bool g = gt[j] == c;
        counts.intersection += (p && g);
        counts.union_ += (p || g);
    }
    return counts;
}

std::optional<double> iou(const ClassIndexMask& pred, const ClassIndexMask& gt, std::uint8_t c) {
    const auto counts = class_counts(pred, gt, c);
    if (counts.union_ == 0) return std::nullopt;
    return static_cast<double>(counts.intersection) / static_cast<double>(counts.union_);
}

IoUReport iou_report_from_counts(std::vector<ClassCounts> counts) {
    IoUReport r;
    r.num_classes = counts.size();
    r.counts = std::move(counts);
    r.per_class_iou.resize(r.num_classes);
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < r.num_classes; ++c) {
        if (r.counts[c].union_ == 0) continue;
        const double v = static_cast<double>(r.counts[c].intersection) / static_cast<double>(r.counts[c].union_);
        r.per_class_iou[c] = v;
        sum += v;
        ++present;
    }
    r.mean_iou = present ? sum / static_cast<double>(present) : 0.0;
    return r;
}

IoUReport mean_iou(std::span<const ClassIndexMask> preds, std::span<const ClassIndexMask> gts,
                   std::size_t num_classes) {
    if (preds.size() != gts.size()) {
        throw std::invalid_argument("mean_iou: " + std::to_string(preds.size()) + " predictions vs " +
                                    std::to_string(gts.size()) + " ground truths");
    }
    if (num_classes == 0 || num_classes > kIgnoreLabel) throw std::invalid_argument("mean_iou: bad class count");
    std::vector<ClassCounts> counts(num_classes);
    for (std::size_t s = 0; s < preds.size(); ++s) {
        const auto& pred = preds[s];
        const auto& gt = gts[s];
        require_same_dims(pred, gt);
        pred.check_labels(num_classes);
        gt.check_labels(num_classes);
        for (std::size_t j = 0; j < gt.size(); ++j) {
            const auto g = gt[j];
            if (g == kIgnoreLabel) continue;
            const auto p = pred[j];
            if (p == kIgnoreLabel) {
                counts[g].union_ += 1;
                continue;
            }
            if (p == g) {
                counts[g].intersection += 1;
                counts[g].union_ += 1;
            } else {
                counts[g].union_ += 1;
                counts[p].union_ += 1;
            }
        }
    }
    return iou_report_from_counts(std::move(counts));
}

nlohmann::ordered_json IoUReport::to_json(const std::vector<std::string>& class_names) const {
    nlohmann::ordered_json j;
    j["num_classes"] = num_classes;
    j["mean_iou"] = mean_iou;
    auto classes = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < num_classes; ++c) {
        nlohmann::ordered_json e;
        e["id"] = c;
        e["name"] = class_label(class_names, c);
        e["intersection"] = counts[c].intersection;
        e["union"] = counts[c].union_;
        e["iou"] = per_class_iou[c] ? nlohmann::ordered_json(*per_class_iou[c]) : nlohmann::ordered_json(nullptr);
        classes.push_back(std::move(e));
    }
    j["classes"] = std::move(classes);
    return j;
}

std::string IoUReport::to_table(const std::vector<std::string>& class_names) const {
    std::ostringstream os;
    os << "class                 IoU(%)   intersection        union\n";
    for (std::size_t c = 0; c < num_classes; ++c) {
        char line[160];
        const std::string iou_str = per_class_iou[c] ? fixed(*per_class_iou[c] * 100.0) : "-";
        std::snprintf(line, sizeof line, "%-20s %7s %14llu %12llu\n", class_label(class_names, c).c_str(),
                      iou_str.c_str(), static_cast<unsigned long long>(counts[c].intersection),
                      static_cast<unsigned long long>(counts[c].union_));
        os << line;
    }
    os << "mIoU(%) " << fixed(mean_iou * 100.0) << "\n";
    return os.str();
}

namespace {

ClassCounts foreground_counts(const ClassIndexMask& pred, const ClassIndexMask& gt) {
    require_same_dims(pred, gt);
    ClassCounts counts;
    for (std::size_t j = 0; j < gt.size(); ++j) {
        const auto g = gt[j];
        if (g == kIgnoreLabel) continue;
        const auto p = pred[j] == kIgnoreLabel ? 0 : pred[j];
        counts.intersection += (g != 0 && p == g);
        counts.union_ += (g != 0 || p != 0);
    }
    return counts;
}

double percent(const ClassCounts& c) {
    return c.union_ == 0 ? 100.0
                         : 100.0 * static_cast<double>(c.intersection) / static_cast<double>(c.union_);
}

}  // namespace

double sample_foreground_iou(const ClassIndexMask& pred, const ClassIndexMask& gt) {
    return percent(foreground_counts(pred, gt));
}

std::size_t band_index(double iou_percent, const std::vector<GainBand>& bands) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
        const bool last = b + 1 == bands.size();
        if (iou_percent >= bands[b].low && (iou_percent < bands[b].high || (last && iou_percent <= bands[b].high))) {
            return b;
        }
    }
    throw std::invalid_argument("IoU " + fixed(iou_percent) + " outside the band range");
}

StratifiedGainReport stratified_gain(std::span<const ClassIndexMask> initial,
                                     std::span<const ClassIndexMask> refined,
                                     std::span<const ClassIndexMask> gts,
                                     const std::vector<GainBand>& bands, GainAveraging averaging) {
    if (initial.empty()) throw std::invalid_argument("stratified_gain: empty dataset");
    if (initial.size() != refined.size() || initial.size() != gts.size()) {
        throw std::invalid_argument("stratified_gain: sample lists are not aligned");
    }
    validate_bands(bands);

    StratifiedGainReport report;
    report.total_samples = initial.size();
    report.bands.resize(bands.size());
    std::vector<ClassCounts> acc_initial(bands.size()), acc_refined(bands.size());
    for (std::size_t b = 0; b < bands.size(); ++b) report.bands[b].range = bands[b];

    for (std::size_t s = 0; s < initial.size(); ++s) {
        const auto ci = foreground_counts(initial[s], gts[s]);
        const auto cr = foreground_counts(refined[s], gts[s]);
        const double before = percent(ci);
        auto& band = report.bands[band_index(before, bands)];
        const std::size_t b = static_cast<std::size_t>(&band - report.bands.data());
        band.sample_count += 1;
        band.mean_initial += before;
        band.mean_refined += percent(cr);
        acc_initial[b] += ci;
        acc_refined[b] += cr;
    }
    for (std::size_t b = 0; b < bands.size(); ++b) {
        auto& band = report.bands[b];
        if (band.sample_count == 0) continue;
        if (averaging == GainAveraging::kPerSample) {
            band.mean_initial /= static_cast<double>(band.sample_count);
            band.mean_refined /= static_cast<double>(band.sample_count);
        } else {
            band.mean_initial = percent(acc_initial[b]);
            band.mean_refined = percent(acc_refined[b]);
        }
        band.mean_gain = band.mean_refined - band.mean_initial;
    }
    return report;
}

nlohmann::ordered_json StratifiedGainReport::to_json() const {
    nlohmann::ordered_json j;
    j["total_samples"] = total_samples;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& b : bands) {
        nlohmann::ordered_json e;
        e["low"] = b.range.low;
        e["high"] = b.range.high;
        e["samples"] = b.sample_count;
        e["mean_initial_iou"] = b.mean_initial;
        e["mean_refined_iou"] = b.mean_refined;
        e["mean_gain"] = b.mean_gain;
        arr.push_back(std::move(e));
    }
    j["bands"] = std::move(arr);
    return j;
}

std::string StratifiedGainReport::to_table() const {
    std::ostringstream os;
    os << "initial IoU band   samples   initial   refined      gain\n";
    for (const auto& b : bands) {
        char line[160];
        const std::string range = fixed(b.range.low, 0) + "-" + fixed(b.range.high, 0);
        const std::string gain = (b.mean_gain >= 0 ? "+" : "") + fixed(b.mean_gain);
        std::snprintf(line, sizeof line, "%-16s %9zu %9s %9s %9s\n", range.c_str(), b.sample_count,
                      fixed(b.mean_initial).c_str(), fixed(b.mean_refined).c_str(), gain.c_str());
        os << line;
    }
    return os.str();
}

}  // namespace segrefine
