// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance tests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "segrefine/types.hpp"

namespace segrefine::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p);

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n, float lo = 0.0f,
                                        float hi = 1.0f) {
    std::uniform_real_distribution<float> u(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

inline std::size_t random_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/**
 * Synthetic 64x64 scene with a square object and a 4 px band around it.
 *
 * Over-segmentation: the coarse mask is the object dilated by 4 px. The band
 * (object colour differs from the band's) gets 0.55, inside the confidence
 * window; the generated foreground texture paints the band like the far
 * background, so band pixels match low-probability exterior pixels.
 *
 * Under-segmentation: the coarse mask is the object eroded by 4 px. The band
 * gets 0.45; the generated background texture paints it like the object core,
 * so band pixels match high-probability core pixels.
 */
struct Scene {
    std::string id;
    std::string class_name;
    ImageTensor image;
    ImageTensor fg_texture;
    ImageTensor bg_texture;
    SoftMask coarse;
    ClassIndexMask ground_truth;  // class id 1 for the object
    std::vector<std::uint8_t> band;  // 1 on the 4 px band
};

Scene over_segmentation_scene(std::size_t size = 64);
Scene under_segmentation_scene(std::size_t size = 64);
/// Coarse mask equal to the ground truth; refinement should leave it alone.
Scene exact_scene(std::size_t size = 64);

/**
 * Writes a dataset root with images/*.g4tn, per-class coarse maps, toy
 * textures, ground truth and prompts.json. Class list: background + the
 * scenes' class names in order of first appearance.
 */
void write_dataset(const std::filesystem::path& root, const std::vector<Scene>& scenes);

}  // namespace segrefine::testing
