// SPDX-License-Identifier: Apache-2.0
#include "segrefine/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "segrefine/diffusion.hpp"
#include "segrefine/image_io.hpp"
#include "segrefine/recorded.hpp"
#include "segrefine/resample.hpp"
#include "segrefine/tensor_file.hpp"

namespace segrefine {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size() || !std::isfinite(v)) {
        throw std::invalid_argument("config: " + key + " expects a number, got '" + value + "'");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    if (value.empty() || !std::all_of(value.begin(), value.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + value + "'");
    }
    try {
        return std::stoull(value);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + " is out of range");
    }
}

BackendKind parse_backend(const std::string& key, const std::string& value) {
    if (value == "toy") return BackendKind::kToy;
    if (value == "recorded") return BackendKind::kRecorded;
    throw std::invalid_argument("config: " + key + " must be 'toy' or 'recorded', got '" + value + "'");
}

const char* backend_name(BackendKind k) { return k == BackendKind::kToy ? "toy" : "recorded"; }

std::string grid_string(const GridSize& g) {
    return std::to_string(g.height) + "x" + std::to_string(g.width);
}

void log_line(const std::string& msg) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[segrefine] " << msg << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace

void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
    const std::string key = trim(raw_key);
    const std::string value = trim(raw_value);
    if (key == "t_s") {
        t_s = parse_uint(key, value);
    } else if (key == "beta") {
        beta = static_cast<float>(parse_double(key, value));
    } else if (key == "alpha_inject") {
        alpha_inject = parse_double(key, value);
    } else if (key == "cf_low") {
        cf_low = static_cast<float>(parse_double(key, value));
    } else if (key == "cf_high") {
        cf_high = static_cast<float>(parse_double(key, value));
    } else if (key == "cf") {
        const auto comma = value.find(',');
        if (comma == std::string::npos) throw std::invalid_argument("config: cf expects 'low,high'");
        cf_low = static_cast<float>(parse_double(key, trim(value.substr(0, comma))));
        cf_high = static_cast<float>(parse_double(key, trim(value.substr(comma + 1))));
    } else if (key == "tau_bin") {
        tau_bin = static_cast<float>(parse_double(key, value));
    } else if (key == "tau_bg") {
        tau_bg = static_cast<float>(parse_double(key, value));
    } else if (key == "backend") {
        backend = parse_backend(key, value);
    } else if (key == "extractor") {
        extractor = parse_backend(key, value);
    } else if (key == "seed") {
        seed = parse_uint(key, value);
    } else if (key == "workers") {
        workers = parse_uint(key, value);
    } else if (key == "attention_resolutions") {
        attention_resolutions = parse_grid_list(value);
    } else if (key == "pos_weight") {
        pos_weight = static_cast<float>(parse_double(key, value));
    } else if (key == "feature_grid") {
        if (value == "0" || value == "native") {
            feature_grid = {0, 0};
        } else {
            const auto grids = parse_grid_list(value);
            if (grids.size() != 1) throw std::invalid_argument("config: feature_grid expects one HxW size");
            feature_grid = grids.front();
        }
    } else if (key == "diag_points") {
        diag_points = parse_uint(key, value);
    } else if (key == "schedule_steps") {
        schedule_steps = parse_uint(key, value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

void RunConfig::validate() const {
    mix().validate();
    if (schedule_steps < 2) throw std::invalid_argument("config: schedule_steps must be >= 2");
    if (t_s == 0 || t_s > schedule_steps) {
        throw std::invalid_argument("config: t_s must be in [1, " + std::to_string(schedule_steps) + "]");
    }
    if (!(tau_bin >= 0.0f && tau_bin <= 1.0f)) throw std::invalid_argument("config: tau_bin must be in [0,1]");
    if (!(tau_bg >= 0.0f && tau_bg <= 1.0f)) throw std::invalid_argument("config: tau_bg must be in [0,1]");
    if (!std::isfinite(alpha_inject)) throw std::invalid_argument("config: alpha_inject must be finite");
    if (attention_resolutions.empty()) throw std::invalid_argument("config: attention_resolutions is empty");
    if (workers == 0) throw std::invalid_argument("config: workers must be >= 1");
    if (!(pos_weight >= 0.0f) || !std::isfinite(pos_weight)) throw std::invalid_argument("config: pos_weight must be >= 0");
}

ordered_json RunConfig::to_json() const {
    // Execution-only settings (workers) are left out so reports do not depend on them.
    ordered_json j;
    j["t_s"] = t_s;
    j["beta"] = beta;
    j["alpha_inject"] = alpha_inject;
    j["cf"] = {cf_low, cf_high};
    j["tau_bin"] = tau_bin;
    j["tau_bg"] = tau_bg;
    j["backend"] = backend_name(backend);
    j["extractor"] = backend_name(extractor);
    j["seed"] = seed;
    auto res = ordered_json::array();
    for (const auto& g : attention_resolutions) res.push_back(grid_string(g));
    j["attention_resolutions"] = res;
    j["pos_weight"] = pos_weight;
    j["feature_grid"] = feature_grid.count() ? grid_string(feature_grid) : "native";
    j["schedule_steps"] = schedule_steps;
    return j;
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        cfg.set(line.substr(0, eq), value);
    }
    return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::help() {
    return R"(Configuration keys (config file lines "key = value", or --set key=value):
  t_s                    noising timestep for the one-step reconstruction (400)
  beta                   mixing coefficient (0.8; 0.9 for weakly-supervised seeds)
  cf / cf_low / cf_high  confidence band of pixels that get mixed (0.2,0.6)
  alpha_inject           injection weight in units of sqrt(head dim) (1.0)
  tau_bin                coarse-mask binarisation threshold for injection (0.5)
  tau_bg                 background threshold when assembling labels (0.5)
  backend                toy | recorded (toy)
  extractor              toy | recorded (toy)
  seed                   noise seed (0)
  workers                samples processed in parallel (1)
  attention_resolutions  injected attention grids, e.g. 64x64,32x32,16x16,8x8
  pos_weight             positional weight of the toy features (0.25)
  feature_grid           toy feature grid HxW, or "native" (native)
  diag_points            correspondence points drawn by `diag` (15)
  schedule_steps         length of the linear-beta noise schedule (1000)
)";
}

const std::vector<std::string>& voc_class_names() {
    static const std::vector<std::string> names{
        "background", "aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",
        "car",        "cat",       "chair",   "cow",   "diningtable", "dog",    "horse",
        "motorbike",  "person",    "pottedplant", "sheep", "sofa",    "train",  "tvmonitor"};
    return names;
}

DatasetLayout DatasetLayout::open(const fs::path& root) {
    const auto prompts_path = root / "prompts.json";
    std::ifstream in(prompts_path);
    if (!in) throw std::runtime_error("dataset: cannot open " + prompts_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(prompts_path.string() + ": " + e.what());
    }
    DatasetLayout layout;
    layout.root_ = root;
    json samples = doc;
    if (doc.contains("samples")) {
        samples = doc.at("samples");
        layout.class_names_ = doc.contains("classes") ? doc.at("classes").get<std::vector<std::string>>()
                                                      : voc_class_names();
    } else {
        layout.class_names_ = voc_class_names();
    }
    if (layout.class_names_.empty() || layout.class_names_.size() > kIgnoreLabel) {
        throw std::runtime_error(prompts_path.string() + ": class list must have 1..255 entries");
    }
    try {
        // json objects iterate in sorted key order.
        for (const auto& [id, classes] : samples.items()) {
            if (id.empty() || id.find('/') != std::string::npos || id.find("..") != std::string::npos) {
                throw std::runtime_error("invalid sample id '" + id + "'");
            }
            layout.samples_.push_back(SampleEntry{id, classes.get<std::vector<std::string>>()});
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(prompts_path.string() + ": " + e.what());
    }
    return layout;
}

const SampleEntry& DatasetLayout::sample(const std::string& id) const {
    for (const auto& s : samples_) {
        if (s.id == id) return s;
    }
    throw std::invalid_argument("dataset: unknown sample '" + id + "'");
}

std::uint8_t DatasetLayout::class_id(const std::string& name) const {
    for (std::size_t i = 1; i < class_names_.size(); ++i) {
        if (class_names_[i] == name) return static_cast<std::uint8_t>(i);
    }
    throw std::invalid_argument("dataset: unknown class '" + name + "'");
}

ImageTensor DatasetLayout::load_image(const std::string& id) const {
    const auto png = root_ / "images" / (id + ".png");
    const auto g4 = root_ / "images" / (id + ".g4tn");
    ImageTensor img;
    if (fs::exists(g4)) {
        img = image_from_tensor(load_tensor(g4));
    } else if (fs::exists(png)) {
        img = read_rgb_png(png);
    } else {
        throw std::runtime_error("missing image for sample '" + id + "'");
    }
    validate_image(img);
    return img;
}

std::map<std::string, SoftMask> DatasetLayout::load_coarse(const SampleEntry& sample) const {
    std::map<std::string, SoftMask> out;
    const auto dir = root_ / "coarse_masks" / sample.id;
    const auto png = root_ / "coarse_masks" / (sample.id + ".png");
    if (fs::is_directory(dir)) {
        for (const auto& name : sample.classes) {
            const auto file = dir / (name + ".g4tn");
            if (!fs::exists(file)) {
                throw std::runtime_error("missing coarse mask " + file.string());
            }
            out.emplace(name, soft_mask_from_tensor(load_tensor(file)));
        }
    } else if (fs::exists(png)) {
        const auto labels = read_indexed_png(png);
        for (const auto& name : sample.classes) {
            const auto id = class_id(name);
            std::vector<float> v(labels.size());
            for (std::size_t j = 0; j < v.size(); ++j) v[j] = labels[j] == id ? 1.0f : 0.0f;
            out.emplace(name, SoftMask(labels.height(), labels.width(), std::move(v)));
        }
    } else {
        throw std::runtime_error("missing coarse mask for sample '" + sample.id + "'");
    }
    return out;
}

std::optional<ClassIndexMask> DatasetLayout::load_ground_truth(const std::string& id) const {
    const auto path = root_ / "ground_truth" / (id + ".png");
    if (!fs::exists(path)) return std::nullopt;
    auto gt = read_indexed_png(path);
    gt.check_labels(class_names_.size());
    return gt;
}

std::pair<ImageTensor, ImageTensor> DatasetLayout::load_toy_textures(const std::string& id,
                                                                     const ImageTensor& image) const {
    const auto dir = root_ / "toy" / id;
    auto load = [&](const char* name) {
        const auto file = dir / name;
        if (!fs::exists(file)) return image;
        auto t = image_from_tensor(load_tensor(file));
        if (!t.same_shape(image)) {
            throw std::runtime_error(file.string() + ": texture shape " + t.shape_string() +
                                     " does not match image " + image.shape_string());
        }
        return t;
    };
    return {load("fg.g4tn"), load("bg.g4tn")};
}

std::uint64_t derive_seed(std::uint64_t base, const std::string& sample_id,
                          const std::string& class_name) {
    // FNV-1a over "id\0class", folded with the base seed.
    std::uint64_t h = 0xcbf29ce484222325ULL ^ base;
    auto feed = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    for (char c : sample_id) feed(static_cast<unsigned char>(c));
    feed(0);
    for (char c : class_name) feed(static_cast<unsigned char>(c));
    return h;
}

struct RunContext::Impl {
    const DatasetLayout& layout;
    RunConfig cfg;
    NoiseSchedule schedule;
    std::shared_ptr<const RecordedRun> recorded;
    std::unique_ptr<DenoiserBackend> recorded_backend;
    std::unique_ptr<FeatureExtractor> extractor;

    Impl(const DatasetLayout& l, const RunConfig& c)
        : layout(l), cfg(c), schedule(NoiseSchedule::linear(c.schedule_steps)) {
        if (cfg.backend == BackendKind::kRecorded || cfg.extractor == BackendKind::kRecorded) {
            recorded = std::make_shared<const RecordedRun>(RecordedRun::open(layout.recorded_dir()));
        }
        if (cfg.backend == BackendKind::kRecorded) {
            recorded_backend = std::make_unique<RecordedBackend>(schedule, recorded);
        }
        if (cfg.extractor == BackendKind::kRecorded) {
            extractor = std::make_unique<RecordedFeatureExtractor>(recorded);
        } else {
            extractor = std::make_unique<ToyFeatureExtractor>(cfg.pos_weight, cfg.feature_grid.height,
                                                              cfg.feature_grid.width);
        }
    }
};

RunContext::RunContext(const DatasetLayout& layout, const RunConfig& cfg) {
    cfg.validate();
    impl_ = std::make_unique<Impl>(layout, cfg);
}

RunContext::~RunContext() = default;

SampleOutcome RunContext::process(const SampleEntry& sample, bool keep_traces) const {
    const auto& cfg = impl_->cfg;
    const auto& layout = impl_->layout;
    SampleOutcome outcome;
    outcome.id = sample.id;
    if (sample.classes.empty()) throw std::runtime_error("sample '" + sample.id + "' lists no classes");

    const ImageTensor image = layout.load_image(sample.id);
    auto coarse = layout.load_coarse(sample);
    for (auto& [name, mask] : coarse) {
        mask = resample_mask(mask, image.height(), image.width());
    }

    std::unique_ptr<DenoiserBackend> toy;
    const DenoiserBackend* backend = impl_->recorded_backend.get();
    if (cfg.backend == BackendKind::kToy) {
        auto [fg, bg] = layout.load_toy_textures(sample.id, image);
        toy = std::make_unique<ToyDenoiser>(impl_->schedule, std::move(fg), std::move(bg));
        backend = toy.get();
    }

    std::map<std::string, ImageTensor> generated;
    for (const auto& [name, mask] : coarse) {
        if (std::none_of(mask.values().begin(), mask.values().end(), [](float v) { return v > 0.0f; })) continue;
        ConditionSpec cond;
        cond.prompt = make_prompt(name);
        cond.tokens = class_token_indices(cond.prompt, name);
        cond.injection = prepare_injection_set(mask, cfg.tau_bin, cond.tokens, kTextContextLength,
                                               cfg.attention_resolutions);
        cond.alpha_inject = cfg.alpha_inject;
        cond.sample_id = sample.id;
        cond.class_name = name;
        generated.emplace(name, one_step_reconstruct(image, cfg.t_s, cond, *backend, impl_->schedule,
                                                     derive_seed(cfg.seed, sample.id, name)));
    }

    auto refined = refine_all_classes(image, generated, coarse, *impl_->extractor, cfg.mix(),
                                      sample.id, cfg.t_s);

    std::map<std::uint8_t, SoftMask> coarse_by_id, refined_by_id;
    for (const auto& [name, mask] : coarse) {
        const auto id = layout.class_id(name);
        coarse_by_id.emplace(id, mask);
        refined_by_id.emplace(id, refined.at(name).mask);
    }
    outcome.coarse = assemble_class_mask(coarse_by_id, cfg.tau_bg);
    outcome.refined = assemble_class_mask(refined_by_id, cfg.tau_bg);

    if (keep_traces) {
        for (auto& [name, mask] : coarse) {
            ClassTrace trace;
            trace.class_name = name;
            trace.class_id = layout.class_id(name);
            trace.coarse = mask;
            if (auto it = generated.find(name); it != generated.end()) trace.generated = it->second;
            trace.refinement = std::move(refined.at(name));
            outcome.traces.push_back(std::move(trace));
        }
    }
    outcome.ok = true;
    return outcome;
}

RunSummary run_refinement(const DatasetLayout& layout, const RunConfig& cfg, const fs::path& out_dir) {
    const RunContext ctx(layout, cfg);
    const auto& samples = layout.samples();
    std::vector<SampleOutcome> outcomes(samples.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < samples.size(); i = next++) {
            auto& out = outcomes[i];
            try {
                out = ctx.process(samples[i]);
                write_indexed_png(out_dir / "masks" / (out.id + ".png"), out.refined);
            } catch (const std::exception& e) {
                out = SampleOutcome{};
                out.id = samples[i].id;
                out.error = e.what();
                log_line("sample '" + out.id + "' failed: " + out.error);
            }
        }
    };
    {
        const std::size_t n = std::max<std::size_t>(1, std::min(cfg.workers, samples.size()));
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
        worker();
    }

    RunSummary summary;
    summary.samples_total = samples.size();
    std::vector<ClassIndexMask> coarse, refined, gts;
    for (const auto& o : outcomes) {
        if (!o.ok) {
            summary.failures.emplace_back(o.id, o.error);
            continue;
        }
        if (auto gt = layout.load_ground_truth(o.id)) {
            if (gt->height() != o.refined.height() || gt->width() != o.refined.width()) {
                summary.failures.emplace_back(o.id, "ground truth size differs from the image");
                continue;
            }
            coarse.push_back(o.coarse);
            refined.push_back(o.refined);
            gts.push_back(std::move(*gt));
        }
    }
    summary.samples_failed = summary.failures.size();

    ordered_json report;
    report["config"] = cfg.to_json();
    report["samples_total"] = summary.samples_total;
    report["samples_ok"] = summary.samples_total - summary.samples_failed;
    report["samples_failed"] = summary.samples_failed;
    auto failures = ordered_json::array();
    for (const auto& [id, msg] : summary.failures) failures.push_back({{"id", id}, {"error", msg}});
    report["failures"] = failures;

    std::ostringstream table;
    table << "samples: " << summary.samples_total << " total, " << summary.samples_failed << " failed\n";
    if (!gts.empty()) {
        const auto& names = layout.class_names();
        summary.coarse_iou = mean_iou(coarse, gts, names.size());
        summary.refined_iou = mean_iou(refined, gts, names.size());
        summary.stratified = stratified_gain(coarse, refined, gts);
        report["evaluation"] = {{"samples", gts.size()},
                                {"coarse", summary.coarse_iou->to_json(names)},
                                {"refined", summary.refined_iou->to_json(names)},
                                {"stratified_gain", summary.stratified->to_json()}};
        table << "\ncoarse masks\n" << summary.coarse_iou->to_table(names);
        table << "\nrefined masks\n" << summary.refined_iou->to_table(names);
        table << "\ngain by initial quality\n" << summary.stratified->to_table();
    }
    summary.report = report;
    write_text(out_dir / "report.json", report.dump(2) + "\n");
    write_text(out_dir / "report.txt", table.str());
    return summary;
}

std::vector<SweepRow> timestep_sweep(const DatasetLayout& layout, const RunConfig& cfg,
                                     const std::vector<std::size_t>& steps, const fs::path& out_dir) {
    if (steps.empty()) throw std::invalid_argument("sweep: no steps given");
    for (auto s : steps) {
        if (s == 0 || s > cfg.schedule_steps) {
            throw std::invalid_argument("sweep: step " + std::to_string(s) + " outside [1, " +
                                        std::to_string(cfg.schedule_steps) + "]");
        }
    }
    std::vector<SweepRow> rows;
    std::string csv = "step,samples_ok,samples_failed,miou_coarse,miou_refined\n";
    for (auto step : steps) {
        RunConfig c = cfg;
        c.t_s = step;
        const auto summary = run_refinement(layout, c, out_dir / "sweep" / ("t" + std::to_string(step)));
        SweepRow row;
        row.step = step;
        row.samples_failed = summary.samples_failed;
        row.samples_ok = summary.samples_total - summary.samples_failed;
        if (summary.refined_iou) {
            row.miou_coarse = summary.coarse_iou->mean_iou;
            row.miou_refined = summary.refined_iou->mean_iou;
        }
        auto num = [](const std::optional<double>& v) {
            if (!v) return std::string{};
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", *v * 100.0);
            return std::string(buf);
        };
        csv += std::to_string(row.step) + "," + std::to_string(row.samples_ok) + "," +
               std::to_string(row.samples_failed) + "," + num(row.miou_coarse) + "," +
               num(row.miou_refined) + "\n";
        rows.push_back(row);
    }
    write_text(out_dir / "sweep.csv", csv);
    return rows;
}

namespace {

void draw_line(ImageTensor& img, long y0, long x0, long y1, long x1, const double rgb[3]) {
    const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    for (;;) {
        if (y0 >= 0 && x0 >= 0 && y0 < static_cast<long>(img.height()) && x0 < static_cast<long>(img.width())) {
            for (std::size_t c = 0; c < 3; ++c) img.at(y0, x0, c) = rgb[c];
        }
        if (x0 == x1 && y0 == y1) break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void draw_dot(ImageTensor& img, long y, long x, const double rgb[3]) {
    for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) draw_line(img, y + dy, x + dx, y + dy, x + dx, rgb);
    }
}

ImageTensor mask_image(const SoftMask& m) {
    return ImageTensor(m.height(), m.width(), 1, std::vector<double>(m.values().begin(), m.values().end()));
}

ImageTensor as_rgb(const ImageTensor& img) {
    if (img.channels() == 3) return img;
    ImageTensor out(img.height(), img.width(), 3);
    for (std::size_t y = 0; y < img.height(); ++y) {
        for (std::size_t x = 0; x < img.width(); ++x) {
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, std::min(c, img.channels() - 1));
        }
    }
    return out;
}

}  // namespace

std::map<std::string, std::vector<DiagnosticPoint>> dump_diagnostics(
    const DatasetLayout& layout, const RunConfig& cfg, const std::string& sample_id,
    std::size_t points, const fs::path& out_dir) {
    const RunContext ctx(layout, cfg);
    const auto outcome = ctx.process(layout.sample(sample_id), true);
    const auto dir = out_dir / "diag" / sample_id;
    const ImageTensor image = layout.load_image(sample_id);
    std::map<std::string, std::vector<DiagnosticPoint>> result;

    for (const auto& trace : outcome.traces) {
        auto& pts = result[trace.class_name];
        const auto& corr = trace.refinement.correspondence;
        const std::string stem = trace.class_name + "_";
        if (!trace.generated.empty()) write_rgb_png(dir / (stem + "generated.png"), as_rgb(trace.generated));
        write_rgb_png(dir / (stem + "coarse.png"), mask_image(trace.coarse));
        write_rgb_png(dir / (stem + "refined.png"), mask_image(trace.refinement.mask));

        ImageTensor overlay = as_rgb(image);
        ordered_json jpts = ordered_json::array();
        if (!corr.index.empty()) {
            std::vector<std::size_t> order(corr.index.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::mt19937_64 rng(derive_seed(cfg.seed, sample_id, trace.class_name));
            std::shuffle(order.begin(), order.end(), rng);
            order.resize(std::min(points, order.size()));
            std::sort(order.begin(), order.end());

            const double sy = static_cast<double>(image.height()) / static_cast<double>(corr.height);
            const double sx = static_cast<double>(image.width()) / static_cast<double>(corr.width);
            const double line_rgb[3] = {1.0, 0.0, 0.0};
            const double gen_rgb[3] = {0.0, 1.0, 0.0};
            const double orig_rgb[3] = {0.0, 0.0, 1.0};
            for (auto j : order) {
                DiagnosticPoint p{j / corr.width, j % corr.width, corr.index[j] / corr.width,
                                  corr.index[j] % corr.width};
                pts.push_back(p);
                const auto gy = static_cast<long>((p.gen_y + 0.5) * sy), gx = static_cast<long>((p.gen_x + 0.5) * sx);
                const auto oy = static_cast<long>((p.orig_y + 0.5) * sy), ox = static_cast<long>((p.orig_x + 0.5) * sx);
                draw_line(overlay, gy, gx, oy, ox, line_rgb);
                draw_dot(overlay, gy, gx, gen_rgb);
                draw_dot(overlay, oy, ox, orig_rgb);
                const double len = std::hypot(static_cast<double>(p.gen_y) - static_cast<double>(p.orig_y),
                                              static_cast<double>(p.gen_x) - static_cast<double>(p.orig_x));
                jpts.push_back({{"generated", {p.gen_y, p.gen_x}}, {"original", {p.orig_y, p.orig_x}}, {"length", len}});
            }
        }
        write_rgb_png(dir / (stem + "correspondence.png"), overlay);
        write_text(dir / (stem + "points.json"), jpts.dump(2) + "\n");
    }
    return result;
}

}  // namespace segrefine
