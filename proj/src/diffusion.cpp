// SPDX-License-Identifier: Apache-2.0
#include "segrefine/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "segrefine/resample.hpp"

namespace segrefine {

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform in (0, 1]: 53 random bits, shifted off zero so log() is safe.
double uniform_open(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t bits = mix64(mix64(seed) ^ (counter * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" + a.shape_string() +
                                    " vs " + b.shape_string() + ")");
    }
}

}  // namespace

double injection_weight(double alpha_scale, std::size_t head_dim) {
    return alpha_scale * std::sqrt(static_cast<double>(head_dim));
}

ImageTensor gaussian_noise(std::size_t height, std::size_t width, std::size_t channels,
                           std::uint64_t seed) {
    ImageTensor out(height, width, channels);
    auto data = out.mutable_data();
    // Box-Muller: pair k fills elements 2k and 2k+1.
    for (std::size_t i = 0; i < data.size(); i += 2) {
        const std::uint64_t pair = i / 2;
        const double u1 = uniform_open(seed, 2 * pair);
        const double u2 = uniform_open(seed, 2 * pair + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        data[i] = r * std::cos(theta);
        if (i + 1 < data.size()) data[i + 1] = r * std::sin(theta);
    }
    return out;
}

ImageTensor add_noise(const ImageTensor& x0, std::size_t t, const ImageTensor& eps,
                      const NoiseSchedule& schedule) {
    require_same_shape(x0, eps, "add_noise");
    const double ab = schedule.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0.data()[i] + noise * eps.data()[i];
    return ImageTensor(x0.height(), x0.width(), x0.channels(), std::move(out));
}

ImageTensor predict_x0(const ImageTensor& x_t, const ImageTensor& eps_hat, std::size_t t,
                       const NoiseSchedule& schedule) {
    require_same_shape(x_t, eps_hat, "predict_x0");
    const double ab = schedule.alpha_bar(t);
    if (!(ab > 0.0)) throw std::invalid_argument("predict_x0: alpha_bar must be positive");
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t.data()[i] - noise * eps_hat.data()[i]) / signal;
    return ImageTensor(x_t.height(), x_t.width(), x_t.channels(), std::move(out));
}

ImageTensor ddim_step(const ImageTensor& x_t, const ImageTensor& eps_hat, std::size_t t,
                      std::size_t t_prev, const NoiseSchedule& schedule, double sigma,
                      std::uint64_t noise_seed) {
    require_same_shape(x_t, eps_hat, "ddim_step");
    if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be smaller than t");
    const double ab_prev = schedule.alpha_bar(t_prev);
    const double direction_var = 1.0 - ab_prev - sigma * sigma;
    if (!(sigma >= 0.0) || direction_var < 0.0) {
        throw std::invalid_argument("ddim_step: invalid sigma (need 0 <= sigma^2 <= 1 - alpha_bar_prev)");
    }
    ImageTensor x0 = predict_x0(x_t, eps_hat, t, schedule);
    if (t_prev == 0 && sigma == 0.0) return x0;

    const double signal = std::sqrt(ab_prev);
    const double direction = std::sqrt(direction_var);
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = signal * x0.data()[i] + direction * eps_hat.data()[i];
    }
    if (sigma > 0.0) {
        const auto z = gaussian_noise(x_t.height(), x_t.width(), x_t.channels(), noise_seed);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * z.data()[i];
    }
    return ImageTensor(x_t.height(), x_t.width(), x_t.channels(), std::move(out));
}

ImageTensor one_step_reconstruct(const ImageTensor& x0, std::size_t t_s,
                                 const ConditionSpec& cond, const DenoiserBackend& backend,
                                 const NoiseSchedule& schedule, std::uint64_t seed) {
    if (t_s == 0 || t_s > schedule.num_steps()) {
        throw std::out_of_range("one_step_reconstruct: t_s must be in [1, " +
                                std::to_string(schedule.num_steps()) + "]");
    }
    const auto eps = gaussian_noise(x0.height(), x0.width(), x0.channels(), seed);
    const auto x_t = add_noise(x0, t_s, eps, schedule);
    const auto eps_hat = backend.predict_eps(x_t, t_s, cond);
    if (!eps_hat.same_shape(x_t)) {
        throw std::runtime_error("denoiser returned shape " + eps_hat.shape_string() + " for input " +
                                 x_t.shape_string());
    }
    return predict_x0(x_t, eps_hat, t_s, schedule);
}

namespace {

// Noise that makes predict_x0(x_t, eps, t) return target.
ImageTensor eps_for_target(const ImageTensor& x_t, const ImageTensor& target, std::size_t t,
                           const NoiseSchedule& schedule) {
    require_same_shape(x_t, target, "denoiser target");
    const double ab = schedule.alpha_bar(t);
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    if (!(noise > 0.0)) throw std::invalid_argument("denoiser: t = 0 has no noise to predict");
    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t.data()[i] - signal * target.data()[i]) / noise;
    return ImageTensor(x_t.height(), x_t.width(), x_t.channels(), std::move(out));
}

}  // namespace

ToyDenoiser::ToyDenoiser(NoiseSchedule schedule, ImageTensor fg_texture, ImageTensor bg_texture)
    : schedule_(std::move(schedule)), fg_(std::move(fg_texture)), bg_(std::move(bg_texture)) {
    require_same_shape(fg_, bg_, "ToyDenoiser textures");
}

ImageTensor ToyDenoiser::target(const ConditionSpec& cond) const {
    if (cond.injection.empty() || cond.alpha_inject == 0.0) return bg_;
    const auto finest = std::max_element(cond.injection.begin(), cond.injection.end(),
                                         [](const auto& a, const auto& b) { return a.grid.count() < b.grid.count(); });
    const BinaryMask m = resample_mask(finest->foreground, fg_.height(), fg_.width());
    std::vector<double> out(fg_.size());
    const std::size_t c = fg_.channels();
    for (std::size_t p = 0; p < m.size(); ++p) {
        const ImageTensor& src = m[p] ? fg_ : bg_;
        for (std::size_t k = 0; k < c; ++k) out[p * c + k] = src.data()[p * c + k];
    }
    return ImageTensor(fg_.height(), fg_.width(), c, std::move(out));
}

ImageTensor ToyDenoiser::predict_eps(const ImageTensor& x_t, std::size_t t,
                                     const ConditionSpec& cond) const {
    return eps_for_target(x_t, target(cond), t, schedule_);
}

RecordedBackend::RecordedBackend(NoiseSchedule schedule, std::shared_ptr<const RecordedRun> run)
    : schedule_(std::move(schedule)), run_(std::move(run)) {
    if (!run_) throw std::invalid_argument("RecordedBackend: null run");
}

ImageTensor RecordedBackend::predict_eps(const ImageTensor& x_t, std::size_t t,
                                         const ConditionSpec& cond) const {
    const auto& g = run_->generation(cond.sample_id, cond.class_name, t);
    const ImageTensor record = image_from_tensor(run_->load_generation(cond.sample_id, cond.class_name, t));
    if (!record.same_shape(x_t)) {
        throw std::runtime_error("recorded prediction for '" + cond.sample_id + "' has shape " +
                                 record.shape_string() + ", expected " + x_t.shape_string());
    }
    if (g.kind == RecordKind::kNoise) return record;
    return eps_for_target(x_t, record, t, schedule_);
}

}  // namespace segrefine
