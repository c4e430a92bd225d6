// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace segrefine {

/**
 * Dense row-major H x W x C image or image-shaped tensor.
 *
 * Also used for noise and noise predictions, so the value range is not part
 * of the type; validate_image() checks the [0,1] pixel-space range.
 * Values are held in double precision in memory. Interchange (TensorFile)
 * stays float32; every float32 value is exactly representable here.
 */
class ImageTensor {
public:
    ImageTensor() = default;
    /// Zero-filled image.
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels);
    /// Throws std::invalid_argument on zero dims, length mismatch or non-finite data.
    ImageTensor(std::size_t height, std::size_t width, std::size_t channels,
                std::vector<double> data);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t pixel_count() const { return height_ * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<const double> data() const { return data_; }
    std::span<double> mutable_data() { return data_; }

    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * width_ + x) * channels_ + c];
    }
    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return data_[(y * width_ + x) * channels_ + c];
    }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ &&
               channels_ == other.channels_;
    }
    std::string shape_string() const;

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

/// Checks a pixel-space image: finite values in [0,1]. Returns the input.
const ImageTensor& validate_image(const ImageTensor& img);

/// Same checks on raw parts, for data that has not been wrapped yet.
void validate_image(std::size_t height, std::size_t width, std::size_t channels,
                    std::span<const double> data);

/// Foreground-probability map, values in [0,1].
class SoftMask {
public:
    SoftMask() = default;
    SoftMask(std::size_t height, std::size_t width, float fill = 0.0f);
    SoftMask(std::size_t height, std::size_t width, std::vector<float> values);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return values_.size(); }
    std::span<const float> values() const { return values_; }

    float operator[](std::size_t i) const { return values_[i]; }
    float at(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
    /// Writes are range-checked.
    void set(std::size_t i, float v);

    friend bool operator==(const SoftMask&, const SoftMask&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<float> values_;
};

/// {0,1} mask, one byte per pixel.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width);
    BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> bits);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return bits_.size(); }
    std::span<const std::uint8_t> bits() const { return bits_; }
    std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
    void set(std::size_t i, bool v) { bits_.at(i) = v ? 1 : 0; }
    std::size_t count() const;

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Pixels with value >= threshold become 1.
BinaryMask binarize(const SoftMask& mask, float threshold);
SoftMask to_soft(const BinaryMask& mask);

/// Label value excluded from evaluation counts (VOC convention).
inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Per-pixel class labels; 0 is background.
class ClassIndexMask {
public:
    ClassIndexMask() = default;
    ClassIndexMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);
    ClassIndexMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t size() const { return labels_.size(); }
    std::span<const std::uint8_t> labels() const { return labels_; }
    std::uint8_t operator[](std::size_t i) const { return labels_[i]; }
    void set(std::size_t i, std::uint8_t v) { labels_.at(i) = v; }

    /// Throws if any label other than kIgnoreLabel is >= num_classes.
    void check_labels(std::size_t num_classes) const;

    friend bool operator==(const ClassIndexMask&, const ClassIndexMask&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> labels_;
};

/**
 * Cumulative signal-retention coefficients alpha_bar[0..T].
 *
 * alpha_bar[0] = 1, strictly decreasing, all entries in (0,1]. This is the
 * cumulative product of (1 - beta_t) of the usual DDPM parametrisation.
 */
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> alpha_bar);

    /// Linear beta schedule, beta_1 = beta_start ... beta_T = beta_end.
    static NoiseSchedule linear(std::size_t num_steps = 1000, double beta_start = 1e-4,
                                double beta_end = 0.02);

    std::size_t num_steps() const { return alpha_bar_.size() - 1; }
    double alpha_bar(std::size_t t) const;
    std::span<const double> alpha_bars() const { return alpha_bar_; }

private:
    std::vector<double> alpha_bar_;
};

/// Sorted, de-duplicated indices into the text-token axis.
class TokenIndexSet {
public:
    TokenIndexSet() = default;
    explicit TokenIndexSet(std::vector<std::size_t> indices);

    std::span<const std::size_t> indices() const { return indices_; }
    bool empty() const { return indices_.empty(); }
    bool contains(std::size_t j) const;
    /// Throws if any index >= key_length.
    void check_bound(std::size_t key_length) const;

    friend bool operator==(const TokenIndexSet&, const TokenIndexSet&) = default;

private:
    std::vector<std::size_t> indices_;
};

}  // namespace segrefine
