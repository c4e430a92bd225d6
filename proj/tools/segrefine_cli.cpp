// SPDX-License-Identifier: Apache-2.0
// segrefine: batch mask refinement, timestep sweeps, diagnostics and evaluation.
//
// Exit status: 0 on success, 2 when any sample failed, 1 on usage or fatal errors.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "segrefine/evaluation.hpp"
#include "segrefine/image_io.hpp"
#include "segrefine/pipeline.hpp"

namespace fs = std::filesystem;
using namespace segrefine;

namespace {

struct CommonOptions {
    std::string root;
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    std::size_t workers = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--root", o.root, "dataset root")->required()->check(CLI::ExistingDirectory);
    cmd->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.overrides, "override one setting, key=value (repeatable)");
    cmd->add_option("--workers", o.workers, "samples processed in parallel");
    cmd->add_option("--out", o.out, "output directory (default <root>/out)");
}

RunConfig build_config(const CommonOptions& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.workers) cfg.workers = o.workers;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const CommonOptions& o, const DatasetLayout& layout) {
    return o.out.empty() ? layout.out_dir() : fs::path(o.out);
}

std::vector<std::size_t> parse_steps(const std::string& text) {
    std::vector<std::size_t> steps;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        const auto item = text.substr(pos, comma - pos);
        if (item.empty() || !std::all_of(item.begin(), item.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            throw std::invalid_argument("--steps expects comma-separated integers, got '" + text + "'");
        }
        steps.push_back(std::stoul(item));
        pos = comma + 1;
    }
    return steps;
}

std::vector<fs::path> png_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

int report_failures(const RunSummary& s) {
    std::cout << "samples: " << s.samples_total << " total, " << s.samples_failed << " failed\n";
    for (const auto& [id, msg] : s.failures) std::cerr << "failed: " << id << ": " << msg << '\n';
    if (s.refined_iou) {
        std::printf("mIoU coarse %.2f%%  refined %.2f%%\n", s.coarse_iou->mean_iou * 100.0,
                    s.refined_iou->mean_iou * 100.0);
    }
    return s.samples_failed ? 2 : 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir, std::size_t num_classes,
             const std::string& json_path) {
    std::vector<ClassIndexMask> preds, gts;
    std::size_t missing = 0;
    for (const auto& gt_path : png_files(gt_dir)) {
        const auto pred_path = fs::path(pred_dir) / gt_path.filename();
        if (!fs::exists(pred_path)) {
            std::cerr << "missing prediction: " << pred_path.string() << '\n';
            ++missing;
            continue;
        }
        gts.push_back(read_indexed_png(gt_path));
        preds.push_back(read_indexed_png(pred_path));
    }
    if (gts.empty()) throw std::runtime_error("no ground-truth/prediction pairs under " + gt_dir);
    const auto& names = num_classes == voc_class_names().size() ? voc_class_names() : std::vector<std::string>{};
    const auto report = mean_iou(preds, gts, num_classes);
    std::cout << report.to_table(names);
    if (!json_path.empty()) {
        nlohmann::ordered_json j = report.to_json(names);
        j["samples"] = gts.size();
        j["missing_predictions"] = missing;
        std::ofstream(json_path) << j.dump(2) << '\n';
    }
    return missing ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coarse segmentation mask refinement"};
    app.require_subcommand(1);
    app.footer(RunConfig::help());

    CommonOptions refine_opts, sweep_opts, diag_opts;
    auto* refine = app.add_subcommand("refine", "refine every sample and write masks and reports");
    add_common(refine, refine_opts);

    auto* sweep = app.add_subcommand("sweep", "one full run per noising timestep");
    add_common(sweep, sweep_opts);
    std::string steps_text = "100,200,300,400,500,600,700";
    sweep->add_option("--steps", steps_text, "comma-separated timesteps")->capture_default_str();

    auto* diag = app.add_subcommand("diag", "write correspondence and mask overlays for one sample");
    add_common(diag, diag_opts);
    std::string sample_id;
    std::optional<std::size_t> points;
    diag->add_option("--sample", sample_id, "sample id")->required();
    diag->add_option("--points", points, "number of correspondence points to draw (default: diag_points)");

    auto* eval = app.add_subcommand("eval", "mIoU of indexed-PNG predictions against ground truth");
    std::string pred_dir, gt_dir, json_path;
    std::size_t num_classes = voc_class_names().size();
    eval->add_option("--pred", pred_dir, "prediction directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--gt", gt_dir, "ground-truth directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--classes", num_classes, "number of classes including background")
        ->capture_default_str()
        ->check(CLI::Range(1, 255));
    eval->add_option("--json", json_path, "also write the report as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*refine) {
            const auto cfg = build_config(refine_opts);
            const auto layout = DatasetLayout::open(refine_opts.root);
            return report_failures(run_refinement(layout, cfg, out_dir(refine_opts, layout)));
        }
        if (*sweep) {
            const auto cfg = build_config(sweep_opts);
            const auto layout = DatasetLayout::open(sweep_opts.root);
            const auto rows = timestep_sweep(layout, cfg, parse_steps(steps_text), out_dir(sweep_opts, layout));
            bool failed = false;
            std::cout << "step  ok  failed  mIoU(coarse)  mIoU(refined)\n";
            for (const auto& r : rows) {
                std::printf("%4zu %3zu %7zu", r.step, r.samples_ok, r.samples_failed);
                if (r.miou_refined) std::printf("  %12.2f  %13.2f", *r.miou_coarse * 100.0, *r.miou_refined * 100.0);
                std::printf("\n");
                failed = failed || r.samples_failed;
            }
            return failed ? 2 : 0;
        }
        if (*diag) {
            const auto cfg = build_config(diag_opts);
            const auto layout = DatasetLayout::open(diag_opts.root);
            const auto out = out_dir(diag_opts, layout);
            const auto pts = dump_diagnostics(layout, cfg, sample_id, points.value_or(cfg.diag_points), out);
            for (const auto& [cls, p] : pts) std::cout << cls << ": " << p.size() << " points\n";
            std::cout << "wrote " << (out / "diag" / sample_id).string() << '\n';
            return 0;
        }
        if (*eval) return run_eval(pred_dir, gt_dir, num_classes, json_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
