// SPDX-License-Identifier: Apache-2.0
#include "segrefine/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace segrefine {

namespace {

void check_dims(std::size_t h, std::size_t w, const char* what) {
    if (h == 0 || w == 0) {
        throw std::invalid_argument(std::string(what) + ": dimensions must be positive");
    }
}

void check_length(std::size_t expected, std::size_t actual, const char* what) {
    if (expected != actual) {
        std::ostringstream os;
        os << what << ": length mismatch (expected " << expected << ", got " << actual << ")";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels)
    : height_(height), width_(width), channels_(channels),
      data_(height * width * channels, 0.0) {
    check_dims(height, width, "image");
    if (channels == 0) throw std::invalid_argument("image: channels must be positive");
}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                         std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_dims(height, width, "image");
    if (channels == 0) throw std::invalid_argument("image: channels must be positive");
    check_length(height * width * channels, data_.size(), "image");
    for (double v : data_) {
        if (!std::isfinite(v)) throw std::invalid_argument("image: non-finite value");
    }
}

std::string ImageTensor::shape_string() const {
    std::ostringstream os;
    os << height_ << "x" << width_ << "x" << channels_;
    return os.str();
}

void validate_image(std::size_t height, std::size_t width, std::size_t channels,
                    std::span<const double> data) {
    check_dims(height, width, "image");
    if (channels == 0) throw std::invalid_argument("image: channels must be positive");
    check_length(height * width * channels, data.size(), "image");
    for (double v : data) {
        if (!std::isfinite(v)) throw std::invalid_argument("image: non-finite value");
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("image: out-of-range pixel value");
    }
}

const ImageTensor& validate_image(const ImageTensor& img) {
    validate_image(img.height(), img.width(), img.channels(), img.data());
    return img;
}

SoftMask::SoftMask(std::size_t height, std::size_t width, float fill)
    : height_(height), width_(width), values_(height * width, fill) {
    check_dims(height, width, "soft mask");
    if (!(fill >= 0.0f && fill <= 1.0f)) throw std::invalid_argument("soft mask: value outside [0,1]");
}

SoftMask::SoftMask(std::size_t height, std::size_t width, std::vector<float> values)
    : height_(height), width_(width), values_(std::move(values)) {
    check_dims(height, width, "soft mask");
    check_length(height * width, values_.size(), "soft mask");
    for (float v : values_) {
        // NaN fails both comparisons.
        if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("soft mask: value outside [0,1]");
    }
}

void SoftMask::set(std::size_t i, float v) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("soft mask: value outside [0,1]");
    values_.at(i) = v;
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width)
    : height_(height), width_(width), bits_(height * width, 0) {
    check_dims(height, width, "binary mask");
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
    check_dims(height, width, "binary mask");
    check_length(height * width, bits_.size(), "binary mask");
    for (auto b : bits_) {
        if (b > 1) throw std::invalid_argument("binary mask: values must be 0 or 1");
    }
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask binarize(const SoftMask& mask, float threshold) {
    std::vector<std::uint8_t> bits(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bits[i] = mask[i] >= threshold ? 1 : 0;
    return BinaryMask(mask.height(), mask.width(), std::move(bits));
}

SoftMask to_soft(const BinaryMask& mask) {
    std::vector<float> v(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) v[i] = mask[i] ? 1.0f : 0.0f;
    return SoftMask(mask.height(), mask.width(), std::move(v));
}

ClassIndexMask::ClassIndexMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : height_(height), width_(width), labels_(height * width, fill) {
    check_dims(height, width, "class mask");
}

ClassIndexMask::ClassIndexMask(std::size_t height, std::size_t width,
                               std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    check_dims(height, width, "class mask");
    check_length(height * width, labels_.size(), "class mask");
}

void ClassIndexMask::check_labels(std::size_t num_classes) const {
    for (auto l : labels_) {
        if (l != kIgnoreLabel && l >= num_classes) {
            throw std::invalid_argument("class mask: label " + std::to_string(l) +
                                        " >= class count " + std::to_string(num_classes));
        }
    }
}

NoiseSchedule::NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2) throw std::invalid_argument("noise schedule: need at least one step");
    if (alpha_bar_[0] != 1.0) throw std::invalid_argument("noise schedule: alpha_bar[0] must be 1");
    for (std::size_t t = 1; t < alpha_bar_.size(); ++t) {
        const double a = alpha_bar_[t];
        if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("noise schedule: alpha_bar outside (0,1]");
        if (!(a < alpha_bar_[t - 1])) {
            throw std::invalid_argument("noise schedule: alpha_bar must be strictly decreasing");
        }
    }
}

NoiseSchedule NoiseSchedule::linear(std::size_t num_steps, double beta_start, double beta_end) {
    if (num_steps == 0) throw std::invalid_argument("noise schedule: num_steps must be positive");
    if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end)) {
        throw std::invalid_argument("noise schedule: need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> ab(num_steps + 1);
    ab[0] = 1.0;
    for (std::size_t t = 1; t <= num_steps; ++t) {
        const double frac = num_steps == 1 ? 0.0
                                           : static_cast<double>(t - 1) / static_cast<double>(num_steps - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        ab[t] = ab[t - 1] * (1.0 - beta);
    }
    return NoiseSchedule(std::move(ab));
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    if (t >= alpha_bar_.size()) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside schedule [0, " +
                                std::to_string(num_steps()) + "]");
    }
    return alpha_bar_[t];
}

TokenIndexSet::TokenIndexSet(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

bool TokenIndexSet::contains(std::size_t j) const {
    return std::binary_search(indices_.begin(), indices_.end(), j);
}

void TokenIndexSet::check_bound(std::size_t key_length) const {
    if (!indices_.empty() && indices_.back() >= key_length) {
        throw std::invalid_argument("token index " + std::to_string(indices_.back()) +
                                    " >= key length " + std::to_string(key_length));
    }
}

}  // namespace segrefine
