// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "segrefine/attention.hpp"
#include "segrefine/recorded.hpp"
#include "segrefine/types.hpp"

namespace segrefine {

inline constexpr std::size_t kDefaultTimestep = 400;

/// Everything the denoiser is conditioned on.
struct ConditionSpec {
    std::string prompt;
    TokenIndexSet tokens;
    /// Per-resolution attention biases; empty means no injection.
    std::vector<InjectionPair> injection;
    /// Bias weight in units of sqrt(d) of the receiving attention layer.
    double alpha_inject = 0.0;
    // Identify recorded assets; ignored by synthetic backends.
    std::string sample_id;
    std::string class_name;
};

/// alpha * sqrt(head_dim): the additive logit bias for one layer.
double injection_weight(double alpha_scale, std::size_t head_dim);

/// Noise predictor contract. Implementations must be safe to call concurrently.
class DenoiserBackend {
public:
    virtual ~DenoiserBackend() = default;
    /// Same shape as x_t, finite.
    virtual ImageTensor predict_eps(const ImageTensor& x_t, std::size_t t,
                                    const ConditionSpec& cond) const = 0;
};

/**
 * Synthetic denoiser whose one-step prediction is exactly
 *
 *   mu(y) = m * fg_texture + (1 - m) * bg_texture
 *
 * where m is the injected foreground at the finest injected resolution,
 * resampled (nearest) to image size. Without injection, or with
 * alpha_inject == 0, m is all zero.
 */
class ToyDenoiser final : public DenoiserBackend {
public:
    ToyDenoiser(NoiseSchedule schedule, ImageTensor fg_texture, ImageTensor bg_texture);

    ImageTensor predict_eps(const ImageTensor& x_t, std::size_t t,
                            const ConditionSpec& cond) const override;
    ImageTensor target(const ConditionSpec& cond) const;

private:
    NoiseSchedule schedule_;
    ImageTensor fg_;
    ImageTensor bg_;
};

/**
 * Serves predictions exported by the bridge. Records of kind "eps" are
 * returned as-is; records of kind "x0" are converted to the noise that makes
 * the one-step prediction reproduce them. A missing record is an error.
 */
class RecordedBackend final : public DenoiserBackend {
public:
    RecordedBackend(NoiseSchedule schedule, std::shared_ptr<const RecordedRun> run);

    ImageTensor predict_eps(const ImageTensor& x_t, std::size_t t,
                            const ConditionSpec& cond) const override;

private:
    NoiseSchedule schedule_;
    std::shared_ptr<const RecordedRun> run_;
};

/// Standard normal noise from a counter-based generator: element i depends only on (seed, i).
ImageTensor gaussian_noise(std::size_t height, std::size_t width, std::size_t channels,
                           std::uint64_t seed);

/// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
ImageTensor add_noise(const ImageTensor& x0, std::size_t t, const ImageTensor& eps,
                      const NoiseSchedule& schedule);

/// x0~ = (x_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)
ImageTensor predict_x0(const ImageTensor& x_t, const ImageTensor& eps_hat, std::size_t t,
                       const NoiseSchedule& schedule);

/**
 * DDIM update to t_prev:
 *   x_prev = sqrt(ab_prev) x0~ + sqrt(1 - ab_prev - sigma^2) eps_hat + sigma z
 * z is drawn from noise_seed when sigma > 0.
 */
ImageTensor ddim_step(const ImageTensor& x_t, const ImageTensor& eps_hat, std::size_t t,
                      std::size_t t_prev, const NoiseSchedule& schedule, double sigma,
                      std::uint64_t noise_seed = 0);

/// Noise x0 to t_s with seeded noise, predict eps once, return x0~.
ImageTensor one_step_reconstruct(const ImageTensor& x0, std::size_t t_s,
                                 const ConditionSpec& cond, const DenoiserBackend& backend,
                                 const NoiseSchedule& schedule, std::uint64_t seed);

}  // namespace segrefine
