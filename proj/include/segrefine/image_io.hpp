// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "segrefine/types.hpp"

namespace segrefine {

using Rgb8 = std::array<std::uint8_t, 3>;

/// The 256-entry PASCAL VOC colour map; palette index = class index.
const std::array<Rgb8, 256>& voc_palette();

/// 8-bit palette PNG with the VOC colour map.
void write_indexed_png(const std::filesystem::path& path, const ClassIndexMask& mask);

/**
 * Reads label indices from a PNG. Palette images yield the raw palette
 * index; 8-bit greyscale images yield the grey value. Other colour types
 * are rejected because they carry no class indices.
 */
ClassIndexMask read_indexed_png(const std::filesystem::path& path);

/// Reads any 8/16-bit PNG as RGB in [0,1] (alpha dropped, grey expanded).
ImageTensor read_rgb_png(const std::filesystem::path& path);

/// Writes 1- or 3-channel images, values clamped to [0,1] and rounded to 8 bits.
void write_rgb_png(const std::filesystem::path& path, const ImageTensor& img);

}  // namespace segrefine
