// SPDX-License-Identifier: Apache-2.0
//
// Index over a directory of bridge exports:
//
//   <run>/manifest.json
//   <run>/<sample_id>/gen_t<t>.g4tn           generated image (or eps) per timestep
//   <run>/<sample_id>/gen_<class>_t<t>.g4tn   same, for samples with several classes
//   <run>/<sample_id>/feat_orig.g4tn          features of the original image
//   <run>/<sample_id>/feat_gen_<class>.g4tn   features of the generated image
//
// manifest.json:
//   {"format": "g4tn-recorded", "version": 1,
//    "samples": [{"id": "...", "prompt": "...", "classes": ["cat"],
//                 "generations": [{"class": "cat", "timestep": 400, "kind": "x0",
//                                  "file": "gen_t400.g4tn", "shape": [512, 512, 3],
//                                  "features": "feat_gen_cat_t400.g4tn"}],
//                 "features": {"grid": [h, w, d], "original": "feat_orig.g4tn",
//                              "generated": {"cat": "feat_gen_cat.g4tn"}}}]}
//
// "file", "features" and the feature file names are optional and default to
// the names above. A generation without "class" applies to every class.
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segrefine/tensor_file.hpp"

namespace segrefine {

inline constexpr const char* kRecordedFormat = "g4tn-recorded";

enum class RecordKind { kGeneratedImage, kNoise };

struct RecordedGeneration {
    std::string class_name;  // empty: any class
    std::size_t timestep = 0;
    RecordKind kind = RecordKind::kGeneratedImage;
    std::filesystem::path file;
    std::vector<std::uint32_t> shape;  // empty: not declared
    std::filesystem::path features;    // empty: use the per-class default
};

struct RecordedSample {
    std::string id;
    std::string prompt;
    std::vector<std::string> classes;
    std::vector<RecordedGeneration> generations;
    std::vector<std::uint32_t> feature_grid;  // [h, w, d], may be empty
    std::filesystem::path original_features;
    std::map<std::string, std::filesystem::path> generated_features;
};

class RecordedRun {
public:
    /// Parses <root>/manifest.json. File existence is checked lazily on load.
    static RecordedRun open(const std::filesystem::path& root);

    const std::filesystem::path& root() const { return root_; }
    const std::vector<RecordedSample>& samples() const { return samples_; }
    bool has_sample(const std::string& id) const;
    const RecordedSample& sample(const std::string& id) const;

    /// Throws "no recorded prediction ..." when absent.
    const RecordedGeneration& generation(const std::string& sample_id,
                                         const std::string& class_name,
                                         std::size_t timestep) const;
    Tensor load_generation(const std::string& sample_id, const std::string& class_name,
                           std::size_t timestep) const;

    Tensor load_original_features(const std::string& sample_id) const;
    /// Timestep-specific features when the generation entry names them.
    Tensor load_generated_features(const std::string& sample_id, const std::string& class_name,
                                   std::optional<std::size_t> timestep) const;

private:
    std::filesystem::path sample_dir(const std::string& id) const { return root_ / id; }
    Tensor load_checked(const std::filesystem::path& file,
                        const std::vector<std::uint32_t>& expected_shape) const;

    std::filesystem::path root_;
    std::vector<RecordedSample> samples_;
};

}  // namespace segrefine
