// SPDX-License-Identifier: Apache-2.0
//
// Batch refinement over a dataset directory:
//
//   <root>/images/<id>.png | <id>.g4tn              original image, RGB in [0,1]
//   <root>/coarse_masks/<id>/<class>.g4tn           per-class soft maps, or
//   <root>/coarse_masks/<id>.png                    indexed PNG (VOC palette)
//   <root>/prompts.json                             sample -> present class names
//   <root>/ground_truth/<id>.png                    optional, enables evaluation
//   <root>/toy/<id>/fg.g4tn, bg.g4tn                optional toy-denoiser textures
//   <root>/recorded/                                optional bridge exports
//   <root>/out/                                     the only write target
//
// prompts.json is either {"<id>": ["cat", ...], ...} (VOC class list) or
// {"classes": ["background", ...], "samples": {"<id>": [...]}}.
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segrefine/attention.hpp"
#include "segrefine/correspondence.hpp"
#include "segrefine/evaluation.hpp"
#include "segrefine/types.hpp"

namespace segrefine {

enum class BackendKind { kToy, kRecorded };

struct RunConfig {
    std::size_t t_s = 400;
    float beta = 0.8f;
    double alpha_inject = 1.0;  // multiples of sqrt(d) per attention layer
    float cf_low = 0.2f;
    float cf_high = 0.6f;
    float tau_bin = 0.5f;
    float tau_bg = 0.5f;
    BackendKind backend = BackendKind::kToy;
    BackendKind extractor = BackendKind::kToy;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::vector<GridSize> attention_resolutions{{64, 64}, {32, 32}, {16, 16}, {8, 8}};
    float pos_weight = 0.25f;
    GridSize feature_grid{0, 0};  // 0x0: image resolution (toy extractor only)
    std::size_t diag_points = 15;
    std::size_t schedule_steps = 1000;

    /// Applies one "key=value" setting; throws on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    void validate() const;
    MixConfig mix() const { return MixConfig{beta, cf_low, cf_high}; }
    nlohmann::ordered_json to_json() const;

    /// Parses "key = value" lines ('#' starts a comment), then applies overrides in order.
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    static std::string help();
};

/// The 21 PASCAL VOC class names, background first.
const std::vector<std::string>& voc_class_names();

struct SampleEntry {
    std::string id;
    std::vector<std::string> classes;
};

class DatasetLayout {
public:
    /// Reads prompts.json; sample ids are processed in sorted order.
    static DatasetLayout open(const std::filesystem::path& root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path out_dir() const { return root_ / "out"; }
    std::filesystem::path recorded_dir() const { return root_ / "recorded"; }
    const std::vector<std::string>& class_names() const { return class_names_; }
    const std::vector<SampleEntry>& samples() const { return samples_; }
    const SampleEntry& sample(const std::string& id) const;
    std::uint8_t class_id(const std::string& name) const;

    ImageTensor load_image(const std::string& id) const;
    /// Soft map per present class, at image resolution.
    std::map<std::string, SoftMask> load_coarse(const SampleEntry& sample) const;
    std::optional<ClassIndexMask> load_ground_truth(const std::string& id) const;
    /// fg/bg textures; defaults to the image itself for any file that is absent.
    std::pair<ImageTensor, ImageTensor> load_toy_textures(const std::string& id,
                                                          const ImageTensor& image) const;

private:
    std::filesystem::path root_;
    std::vector<std::string> class_names_;
    std::vector<SampleEntry> samples_;
};

/// Everything computed for one class of one sample.
struct ClassTrace {
    std::string class_name;
    std::uint8_t class_id = 0;
    SoftMask coarse;
    ImageTensor generated;
    Refinement refinement;
};

struct SampleOutcome {
    std::string id;
    bool ok = false;
    std::string error;
    ClassIndexMask coarse;
    ClassIndexMask refined;
    std::vector<ClassTrace> traces;  // filled only when requested
};

/// Shared, read-only backend state for a run.
class RunContext {
public:
    RunContext(const DatasetLayout& layout, const RunConfig& cfg);
    ~RunContext();
    RunContext(const RunContext&) = delete;
    RunContext& operator=(const RunContext&) = delete;

    /// Coarse mask -> injection -> one-step reconstruction -> correspondence mixing -> assembly.
    SampleOutcome process(const SampleEntry& sample, bool keep_traces = false) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct RunSummary {
    std::size_t samples_total = 0;
    std::size_t samples_failed = 0;
    std::vector<std::pair<std::string, std::string>> failures;  // id, message
    std::optional<IoUReport> coarse_iou;
    std::optional<IoUReport> refined_iou;
    std::optional<StratifiedGainReport> stratified;
    nlohmann::ordered_json report;  // as written to report.json
};

/**
 * Processes every sample, writes <out>/masks/<id>.png, <out>/report.json and
 * <out>/report.txt. Per-sample failures are recorded and skipped.
 */
RunSummary run_refinement(const DatasetLayout& layout, const RunConfig& cfg,
                          const std::filesystem::path& out_dir);

struct SweepRow {
    std::size_t step = 0;
    std::size_t samples_ok = 0;
    std::size_t samples_failed = 0;
    std::optional<double> miou_coarse;
    std::optional<double> miou_refined;
};

/// One full run per step under <out>/sweep/t<step>/, plus <out>/sweep.csv.
std::vector<SweepRow> timestep_sweep(const DatasetLayout& layout, const RunConfig& cfg,
                                     const std::vector<std::size_t>& steps,
                                     const std::filesystem::path& out_dir);

struct DiagnosticPoint {
    std::size_t gen_y = 0, gen_x = 0;    // feature-grid coordinates
    std::size_t orig_y = 0, orig_x = 0;  // matched original pixel
};

/// Writes generated image, before/after masks and a correspondence overlay per class
/// under <out>/diag/<id>/. Returns the sampled points per class.
std::map<std::string, std::vector<DiagnosticPoint>> dump_diagnostics(
    const DatasetLayout& layout, const RunConfig& cfg, const std::string& sample_id,
    std::size_t points, const std::filesystem::path& out_dir);

/// Deterministic per-(sample, class) noise seed.
std::uint64_t derive_seed(std::uint64_t base, const std::string& sample_id,
                          const std::string& class_name);

}  // namespace segrefine
