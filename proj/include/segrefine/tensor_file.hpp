// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor interchange record:
//
//   offset  size        field
//   0       4           magic "G4TN"
//   4       1           version (1)
//   5       1           rank (0..8)
//   6       2           reserved, zero
//   8       4 * rank    dims, u32 little-endian
//   ...     4 * prod    payload, float32 little-endian, row-major
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "segrefine/types.hpp"

namespace segrefine {

inline constexpr std::uint8_t kTensorFileVersion = 1;
inline constexpr std::size_t kTensorFileMaxRank = 8;

struct Tensor {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t rank() const { return dims.size(); }
    std::size_t element_count() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Throws std::runtime_error("... bad magic" / "... truncated" / ...) on malformed input.
Tensor read_tensor_file(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_tensor_file(const Tensor& tensor);

Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const std::filesystem::path& path, const Tensor& tensor);

// Typed views. Images are [H, W, C] (rank 2 is read as C = 1); masks [H, W].
Tensor to_tensor(const ImageTensor& img);
Tensor to_tensor(const SoftMask& mask);
ImageTensor image_from_tensor(const Tensor& t);
SoftMask soft_mask_from_tensor(const Tensor& t);

}  // namespace segrefine
