// SPDX-License-Identifier: Apache-2.0
#include "segrefine/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "segrefine/resample.hpp"

namespace segrefine {

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t dim,
                       std::vector<float> data, bool normalized)
    : height_(height), width_(width), dim_(dim), data_(std::move(data)), normalized_(normalized) {
    if (height == 0 || width == 0 || dim == 0) throw std::invalid_argument("feature map: dimensions must be positive");
    if (data_.size() != height * width * dim) throw std::invalid_argument("feature map: length mismatch");
    for (float v : data_) {
        if (!std::isfinite(v)) throw std::invalid_argument("feature map: non-finite value");
    }
}

FeatureMap feature_map_from_tensor(const Tensor& t) {
    if (t.rank() != 3) throw std::invalid_argument("feature tensor must be [h, w, d]");
    return FeatureMap(t.dims[0], t.dims[1], t.dims[2], t.data);
}

FeatureMap normalize_features(const FeatureMap& fm, float eps) {
    std::vector<float> out(fm.data().begin(), fm.data().end());
    const std::size_t d = fm.dim();
    for (std::size_t j = 0; j < fm.pixel_count(); ++j) {
        float* v = out.data() + j * d;
        double sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) sq += static_cast<double>(v[c]) * v[c];
        const double norm = std::max(std::sqrt(sq), static_cast<double>(eps));
        for (std::size_t c = 0; c < d; ++c) v[c] = static_cast<float>(v[c] / norm);
    }
    return FeatureMap(fm.height(), fm.width(), d, std::move(out), true);
}

namespace {

void check_pair(const FeatureMap& original, const FeatureMap& generated) {
    if (!original.normalized() || !generated.normalized()) {
        throw std::invalid_argument("correspondence: feature maps must be normalized");
    }
    if (original.height() != generated.height() || original.width() != generated.width() ||
        original.dim() != generated.dim()) {
        throw std::invalid_argument("correspondence: feature map dimensions differ");
    }
    if (original.pixel_count() > std::numeric_limits<std::uint32_t>::max()) {
        throw std::invalid_argument("correspondence: grid too large for 32-bit indices");
    }
}

// Both search paths accumulate each dot product as
// 0 + a[0]b[0] + a[1]b[1] + ... in float, in this order, and compare
// 1 - dot with a strict '<'. That makes the tiled result bit-identical.
float cosine_distance_f(const float* a, const float* b, std::size_t d) {
    float dot = 0.0f;
    for (std::size_t c = 0; c < d; ++c) dot += a[c] * b[c];
    return 1.0f - dot;
}

constexpr std::size_t kGenTile = 8;
constexpr std::size_t kOrigTile = 512;

void search_rows(const FeatureMap& generated, std::span<const float> orig_t, std::size_t n,
                 std::size_t begin, std::size_t end, std::uint32_t* out) {
    const std::size_t d = generated.dim();
    const float* gen = generated.data().data();
    alignas(64) float acc[kGenTile][kOrigTile];
    float best[kGenTile];
    std::uint32_t best_idx[kGenTile];

    for (std::size_t g0 = begin; g0 < end; g0 += kGenTile) {
        const std::size_t gn = std::min(kGenTile, end - g0);
        for (std::size_t ii = 0; ii < gn; ++ii) {
            best[ii] = std::numeric_limits<float>::infinity();
            best_idx[ii] = 0;
        }
        for (std::size_t o0 = 0; o0 < n; o0 += kOrigTile) {
            const std::size_t on = std::min(kOrigTile, n - o0);
            for (std::size_t ii = 0; ii < gn; ++ii) std::fill_n(acc[ii], on, 0.0f);
            for (std::size_t c = 0; c < d; ++c) {
                const float* col = orig_t.data() + c * n + o0;
                for (std::size_t ii = 0; ii < gn; ++ii) {
                    const float g = gen[(g0 + ii) * d + c];
                    float* a = acc[ii];
                    for (std::size_t jj = 0; jj < on; ++jj) a[jj] += g * col[jj];
                }
            }
            for (std::size_t ii = 0; ii < gn; ++ii) {
                for (std::size_t jj = 0; jj < on; ++jj) {
                    const float dist = 1.0f - acc[ii][jj];
                    if (dist < best[ii]) {
                        best[ii] = dist;
                        best_idx[ii] = static_cast<std::uint32_t>(o0 + jj);
                    }
                }
            }
        }
        for (std::size_t ii = 0; ii < gn; ++ii) out[g0 + ii] = best_idx[ii];
    }
}

}  // namespace

CorrespondenceMap find_correspondence_bruteforce(const FeatureMap& original,
                                                 const FeatureMap& generated) {
    check_pair(original, generated);
    const std::size_t n = original.pixel_count();
    const std::size_t d = original.dim();
    CorrespondenceMap map{generated.height(), generated.width(), std::vector<std::uint32_t>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        float best = std::numeric_limits<float>::infinity();
        std::uint32_t arg = 0;
        for (std::size_t jp = 0; jp < n; ++jp) {
            const float dist = cosine_distance_f(generated.pixel(j).data(), original.pixel(jp).data(), d);
            if (dist < best) {
                best = dist;
                arg = static_cast<std::uint32_t>(jp);
            }
        }
        map.index[j] = arg;
    }
    return map;
}

CorrespondenceMap find_correspondence(const FeatureMap& original, const FeatureMap& generated,
                                      std::size_t workers) {
    check_pair(original, generated);
    const std::size_t n = original.pixel_count();
    const std::size_t d = original.dim();

    // d x n layout so the innermost loop streams contiguous original pixels.
    std::vector<float> orig_t(n * d);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < d; ++c) orig_t[c * n + j] = original.data()[j * d + c];
    }

    CorrespondenceMap map{generated.height(), generated.width(), std::vector<std::uint32_t>(n)};
    workers = std::max<std::size_t>(1, std::min(workers, (n + kGenTile - 1) / kGenTile));
    if (workers == 1) {
        search_rows(generated, orig_t, n, 0, n, map.index.data());
        return map;
    }
    // Chunks are tile-aligned; each worker writes a disjoint range.
    const std::size_t tiles = (n + kGenTile - 1) / kGenTile;
    const std::size_t per = (tiles + workers - 1) / workers;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(n, w * per * kGenTile);
            const std::size_t end = std::min(n, (w + 1) * per * kGenTile);
            if (begin >= end) break;
            pool.emplace_back([&, begin, end] {
                search_rows(generated, orig_t, n, begin, end, map.index.data());
            });
        }
    }
    return map;
}

void MixConfig::validate() const {
    if (!(beta >= 0.0f && beta <= 1.0f)) throw std::invalid_argument("mix config: beta must be in [0,1]");
    if (!(cf_low >= 0.0f && cf_low <= cf_high && cf_high <= 1.0f)) {
        throw std::invalid_argument("mix config: need 0 <= cf_low <= cf_high <= 1");
    }
}

SoftMask mix_probabilities(const SoftMask& mask, const CorrespondenceMap& delta,
                           const MixConfig& cfg) {
    cfg.validate();
    if (delta.index.size() != mask.size()) {
        throw std::invalid_argument("mix_probabilities: correspondence length " +
                                    std::to_string(delta.index.size()) + " != mask length " +
                                    std::to_string(mask.size()));
    }
    std::vector<float> out(mask.values().begin(), mask.values().end());
    const double beta = cfg.beta;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const float s = mask[j];
        if (s < cfg.cf_low || s > cfg.cf_high) continue;
        const std::uint32_t src = delta.index[j];
        if (src >= mask.size()) throw std::invalid_argument("mix_probabilities: correspondence index out of range");
        const float target = mask[src];
        float mixed = static_cast<float>(beta * s + (1.0 - beta) * target);
        // Keep the direction when a small move rounds back onto s.
        if (beta < 1.0 && mixed == s && target != s) mixed = std::nextafter(s, target);
        out[j] = std::clamp(mixed, 0.0f, 1.0f);
    }
    return SoftMask(mask.height(), mask.width(), std::move(out));
}

ToyFeatureExtractor::ToyFeatureExtractor(float pos_weight, std::size_t grid_h, std::size_t grid_w)
    : pos_weight_(pos_weight), grid_h_(grid_h), grid_w_(grid_w) {
    if (!std::isfinite(pos_weight) || pos_weight < 0.0f) {
        throw std::invalid_argument("toy features: positional weight must be finite and >= 0");
    }
    if ((grid_h == 0) != (grid_w == 0)) throw std::invalid_argument("toy features: grid needs both dimensions");
}

FeatureMap ToyFeatureExtractor::embed(const ImageTensor& img, const FeatureKey&) const {
    const ImageTensor src = grid_h_ ? resample_image(img, grid_h_, grid_w_) : img;
    const std::size_t h = src.height(), w = src.width(), c = src.channels();
    const std::size_t d = c + 2;
    std::vector<float> raw(h * w * d);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            float* v = raw.data() + (y * w + x) * d;
            for (std::size_t k = 0; k < c; ++k) v[k] = static_cast<float>(src.at(y, x, k));
            v[c] = w > 1 ? pos_weight_ * static_cast<float>(x) / static_cast<float>(w - 1) : 0.0f;
            v[c + 1] = h > 1 ? pos_weight_ * static_cast<float>(y) / static_cast<float>(h - 1) : 0.0f;
        }
    }
    return normalize_features(FeatureMap(h, w, d, std::move(raw)));
}

RecordedFeatureExtractor::RecordedFeatureExtractor(std::shared_ptr<const RecordedRun> run)
    : run_(std::move(run)) {
    if (!run_) throw std::invalid_argument("RecordedFeatureExtractor: null run");
}

FeatureMap RecordedFeatureExtractor::embed(const ImageTensor&, const FeatureKey& key) const {
    const Tensor t = key.generated ? run_->load_generated_features(key.sample_id, key.class_name, key.timestep)
                                   : run_->load_original_features(key.sample_id);
    return normalize_features(feature_map_from_tensor(t));
}

Refinement refine_with_features(const FeatureMap& original, const FeatureMap& generated,
                                const SoftMask& mask, const MixConfig& cfg, std::size_t workers) {
    cfg.validate();
    Refinement r;
    r.correspondence = find_correspondence(original, generated, workers);
    r.feature_mask = resample_mask(mask, generated.height(), generated.width());
    r.feature_refined = mix_probabilities(r.feature_mask, r.correspondence, cfg);
    r.mask = resample_mask(r.feature_refined, mask.height(), mask.width());
    return r;
}

Refinement refine_mask(const ImageTensor& image, const ImageTensor& generated,
                       const SoftMask& mask, const FeatureExtractor& extractor,
                       const MixConfig& cfg, const FeatureKey& original_key,
                       const FeatureKey& generated_key) {
    if (!image.same_shape(generated)) {
        throw std::invalid_argument("refine_mask: generated image " + generated.shape_string() +
                                    " does not match " + image.shape_string());
    }
    const FeatureMap fo = normalize_features(extractor.embed(image, original_key));
    const FeatureMap fg = normalize_features(extractor.embed(generated, generated_key));
    return refine_with_features(fo, fg, mask, cfg);
}

std::map<std::string, Refinement> refine_all_classes(
    const ImageTensor& image, const std::map<std::string, ImageTensor>& generated,
    const std::map<std::string, SoftMask>& coarse, const FeatureExtractor& extractor,
    const MixConfig& cfg, const std::string& sample_id, std::optional<std::size_t> timestep) {
    cfg.validate();
    std::map<std::string, Refinement> out;
    std::optional<FeatureMap> original;
    for (const auto& [name, mask] : coarse) {
        const bool present = std::any_of(mask.values().begin(), mask.values().end(),
                                         [](float v) { return v > 0.0f; });
        if (!present) {
            out[name] = Refinement{mask, {}, mask, mask};
            continue;
        }
        const auto it = generated.find(name);
        if (it == generated.end()) {
            throw std::invalid_argument("refine_all_classes: no generated image for class '" + name + "'");
        }
        if (!image.same_shape(it->second)) {
            throw std::invalid_argument("refine_all_classes: generated image for '" + name +
                                        "' has shape " + it->second.shape_string());
        }
        if (!original) {
            original = normalize_features(extractor.embed(image, FeatureKey{sample_id, {}, timestep, false}));
        }
        const FeatureMap gen = normalize_features(extractor.embed(it->second, FeatureKey{sample_id, name, timestep, true}));
        out[name] = refine_with_features(*original, gen, mask, cfg);
    }
    return out;
}

double pixel_distance(std::span<const float> a, std::span<const float> b, PixelMetric metric) {
    if (a.size() != b.size()) throw std::invalid_argument("pixel_distance: dimension mismatch");
    if (metric == PixelMetric::kCosine) {
        if (std::equal(a.begin(), a.end(), b.begin())) return 0.0;
        double dot = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) dot += static_cast<double>(a[c]) * b[c];
        return std::max(0.0, 1.0 - dot);
    }
    double sq = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
        const double diff = static_cast<double>(a[c]) - b[c];
        sq += diff * diff;
    }
    return std::sqrt(sq);
}

namespace {

std::vector<double> nearest_distances(const FeatureMap& a, const FeatureMap& b, PixelMetric metric) {
    if (a.dim() != b.dim()) throw std::invalid_argument("hausdorff: feature dimensions differ");
    if (metric == PixelMetric::kCosine && (!a.normalized() || !b.normalized())) {
        throw std::invalid_argument("hausdorff: cosine metric needs normalized features");
    }
    std::vector<double> out(a.pixel_count());
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.pixel_count(); ++j) {
            best = std::min(best, pixel_distance(a.pixel(i), b.pixel(j), metric));
        }
        out[i] = best;
    }
    return out;
}

}  // namespace

double hausdorff_distance(const FeatureMap& a, const FeatureMap& b, PixelMetric metric) {
    const auto d = nearest_distances(a, b, metric);
    return *std::max_element(d.begin(), d.end());
}

double directed_sum_distance(const FeatureMap& a, const FeatureMap& b, PixelMetric metric) {
    double sum = 0.0;
    for (double v : nearest_distances(a, b, metric)) sum += v;
    return sum;
}

}  // namespace segrefine
