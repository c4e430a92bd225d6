// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <array>
#include <atomic>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

#include <json.hpp>
#include <unistd.h>

#include "segrefine/image_io.hpp"
#include "segrefine/tensor_file.hpp"

namespace segrefine::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("segrefine_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace {

using Rgb = std::array<double, 3>;

constexpr std::size_t kObjectLo = 20;
constexpr std::size_t kBand = 4;

enum class Region { kCore, kBand, kExterior };

// Core is [kObjectLo, size - kObjectLo)^2; the band is the kBand-pixel frame around it.
Region region(std::size_t y, std::size_t x, std::size_t size) {
    const std::size_t inner_lo = kObjectLo;
    const std::size_t inner_hi = size - inner_lo;
    const std::size_t outer_lo = inner_lo - kBand;
    const std::size_t outer_hi = inner_hi + kBand;
    auto in = [&](std::size_t lo, std::size_t hi) { return y >= lo && y < hi && x >= lo && x < hi; };
    if (in(inner_lo, inner_hi)) return Region::kCore;
    if (in(outer_lo, outer_hi)) return Region::kBand;
    return Region::kExterior;
}

ImageTensor paint(std::size_t size, const Rgb& core, const Rgb& band, const Rgb& ext) {
    ImageTensor img(size, size, 3);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const auto r = region(y, x, size);
            const Rgb& c = r == Region::kCore ? core : r == Region::kBand ? band : ext;
            for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
        }
    }
    return img;
}

Scene make_scene(std::size_t size, bool over, bool exact) {
    if (size < 2 * (kObjectLo + 1)) throw std::invalid_argument("scene too small");
    // Band colours differ in hue, not only brightness: cosine matching is scale-invariant, so a
    // darker copy of a colour would trade brightness for the positional channels.
    const Rgb red{1, 0, 0}, purple{0.8, 0, 0.4}, green{0, 1, 0}, teal{0, 0.8, 0.4};
    Scene s;
    s.class_name = "cat";
    s.band.assign(size * size, 0);
    s.ground_truth = ClassIndexMask(size, size, 0);
    std::vector<float> coarse(size * size);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const std::size_t j = y * size + x;
            const auto r = region(y, x, size);
            s.band[j] = r == Region::kBand;
            const bool object = over ? r == Region::kCore : r != Region::kExterior;
            s.ground_truth.set(j, object ? 1 : 0);
            if (exact) {
                coarse[j] = object ? 0.9f : 0.05f;
            } else {
                coarse[j] = r == Region::kCore ? 0.9f : r == Region::kExterior ? 0.05f : (over ? 0.55f : 0.45f);
            }
        }
    }
    s.coarse = SoftMask(size, size, std::move(coarse));
    if (over) {
        s.id = exact ? "exact" : "over";
        s.image = paint(size, red, teal, green);
        s.fg_texture = paint(size, red, green, green);
        s.bg_texture = s.image;
    } else {
        s.id = "under";
        s.class_name = "dog";
        s.image = paint(size, red, purple, green);
        s.fg_texture = s.image;
        s.bg_texture = paint(size, red, red, green);
    }
    if (exact) s.class_name = "bird";
    return s;
}

}  // namespace

Scene over_segmentation_scene(std::size_t size) { return make_scene(size, true, false); }
Scene under_segmentation_scene(std::size_t size) { return make_scene(size, false, false); }
Scene exact_scene(std::size_t size) { return make_scene(size, true, true); }

void write_dataset(const fs::path& root, const std::vector<Scene>& scenes) {
    std::vector<std::string> classes{"background"};
    std::map<std::string, std::uint8_t> ids;
    for (const auto& s : scenes) {
        if (!ids.count(s.class_name)) {
            ids[s.class_name] = static_cast<std::uint8_t>(classes.size());
            classes.push_back(s.class_name);
        }
    }
    nlohmann::json samples = nlohmann::json::object();
    for (const auto& s : scenes) {
        save_tensor(root / "images" / (s.id + ".g4tn"), to_tensor(s.image));
        save_tensor(root / "coarse_masks" / s.id / (s.class_name + ".g4tn"), to_tensor(s.coarse));
        save_tensor(root / "toy" / s.id / "fg.g4tn", to_tensor(s.fg_texture));
        save_tensor(root / "toy" / s.id / "bg.g4tn", to_tensor(s.bg_texture));
        ClassIndexMask gt = s.ground_truth;
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (gt[j] == 1) gt.set(j, ids.at(s.class_name));
        }
        write_indexed_png(root / "ground_truth" / (s.id + ".png"), gt);
        samples[s.id] = nlohmann::json::array({s.class_name});
    }
    std::ofstream(root / "prompts.json") << nlohmann::json{{"classes", classes}, {"samples", samples}}.dump(2);
}

}  // namespace segrefine::testing
