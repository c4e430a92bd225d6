// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "segrefine/types.hpp"

namespace segrefine {

/// Nearest source index for destination index i: floor((i + 0.5) * src / dst).
inline std::size_t nearest_source_index(std::size_t i, std::size_t src, std::size_t dst) {
    const std::size_t s = ((2 * i + 1) * src) / (2 * dst);
    return s < src ? s : src - 1;
}

/// Nearest-neighbour resampling of a row-major H x W x C buffer.
template <typename T>
std::vector<T> resample_nearest(std::span<const T> src, std::size_t src_h, std::size_t src_w,
                                std::size_t channels, std::size_t dst_h, std::size_t dst_w) {
    if (dst_h == 0 || dst_w == 0) throw std::invalid_argument("resample: target dimensions must be positive");
    if (src.size() != src_h * src_w * channels) throw std::invalid_argument("resample: source length mismatch");
    std::vector<T> out(dst_h * dst_w * channels);
    for (std::size_t y = 0; y < dst_h; ++y) {
        const std::size_t sy = nearest_source_index(y, src_h, dst_h);
        for (std::size_t x = 0; x < dst_w; ++x) {
            const std::size_t sx = nearest_source_index(x, src_w, dst_w);
            const T* s = src.data() + (sy * src_w + sx) * channels;
            T* d = out.data() + (y * dst_w + x) * channels;
            for (std::size_t c = 0; c < channels; ++c) d[c] = s[c];
        }
    }
    return out;
}

SoftMask resample_mask(const SoftMask& mask, std::size_t target_h, std::size_t target_w);
BinaryMask resample_mask(const BinaryMask& mask, std::size_t target_h, std::size_t target_w);
ImageTensor resample_image(const ImageTensor& img, std::size_t target_h, std::size_t target_w);

}  // namespace segrefine
