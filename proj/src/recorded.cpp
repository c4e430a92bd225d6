// SPDX-License-Identifier: Apache-2.0
#include "segrefine/recorded.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace segrefine {

namespace {

using nlohmann::json;

std::vector<std::uint32_t> read_shape(const json& j) {
    std::vector<std::uint32_t> shape;
    for (const auto& d : j) shape.push_back(d.get<std::uint32_t>());
    return shape;
}

std::string shape_str(const std::vector<std::uint32_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

}  // namespace

RecordedRun RecordedRun::open(const std::filesystem::path& root) {
    const auto manifest_path = root / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("recorded run: cannot open " + manifest_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest_path.string() + ": " + e.what());
    }
    if (doc.value("format", std::string{}) != kRecordedFormat) {
        throw std::runtime_error(manifest_path.string() + ": format must be \"" + kRecordedFormat + "\"");
    }
    if (doc.value("version", 0) != 1) throw std::runtime_error(manifest_path.string() + ": unsupported version");

    RecordedRun run;
    run.root_ = root;
    try {
        for (const auto& js : doc.at("samples")) {
            RecordedSample s;
            s.id = js.at("id").get<std::string>();
            if (s.id.empty() || s.id.find('/') != std::string::npos) {
                throw std::runtime_error("invalid sample id '" + s.id + "'");
            }
            s.prompt = js.value("prompt", std::string{});
            if (js.contains("classes")) s.classes = js.at("classes").get<std::vector<std::string>>();
            for (const auto& jg : js.value("generations", json::array())) {
                RecordedGeneration g;
                g.class_name = jg.value("class", std::string{});
                g.timestep = jg.at("timestep").get<std::size_t>();
                const auto kind = jg.value("kind", std::string{"x0"});
                if (kind == "x0") {
                    g.kind = RecordKind::kGeneratedImage;
                } else if (kind == "eps") {
                    g.kind = RecordKind::kNoise;
                } else {
                    throw std::runtime_error("unknown record kind '" + kind + "'");
                }
                const std::string default_name =
                    g.class_name.empty() ? "gen_t" + std::to_string(g.timestep) + ".g4tn"
                                         : "gen_" + g.class_name + "_t" + std::to_string(g.timestep) + ".g4tn";
                g.file = jg.value("file", default_name);
                if (jg.contains("shape")) g.shape = read_shape(jg.at("shape"));
                g.features = jg.value("features", std::string{});
                s.generations.push_back(std::move(g));
            }
            const json feats = js.value("features", json::object());
            if (feats.contains("grid")) s.feature_grid = read_shape(feats.at("grid"));
            s.original_features = feats.value("original", std::string{"feat_orig.g4tn"});
            for (const auto& [cls, file] : feats.value("generated", json::object()).items()) {
                s.generated_features[cls] = file.get<std::string>();
            }
            if (run.has_sample(s.id)) throw std::runtime_error("duplicate sample id '" + s.id + "'");
            run.samples_.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(manifest_path.string() + ": " + e.what());
    }
    return run;
}

bool RecordedRun::has_sample(const std::string& id) const {
    return std::any_of(samples_.begin(), samples_.end(), [&](const auto& s) { return s.id == id; });
}

const RecordedSample& RecordedRun::sample(const std::string& id) const {
    for (const auto& s : samples_) {
        if (s.id == id) return s;
    }
    throw std::runtime_error("recorded run: no sample '" + id + "'");
}

const RecordedGeneration& RecordedRun::generation(const std::string& sample_id,
                                                  const std::string& class_name,
                                                  std::size_t timestep) const {
    if (has_sample(sample_id)) {
        const auto& s = sample(sample_id);
        // An exact class match wins over a class-agnostic entry.
        const RecordedGeneration* fallback = nullptr;
        for (const auto& g : s.generations) {
            if (g.timestep != timestep) continue;
            if (g.class_name == class_name) return g;
            if (g.class_name.empty() && !fallback) fallback = &g;
        }
        if (fallback) return *fallback;
    }
    throw std::runtime_error("no recorded prediction for sample '" + sample_id + "', class '" +
                             class_name + "', t=" + std::to_string(timestep));
}

Tensor RecordedRun::load_checked(const std::filesystem::path& file,
                                 const std::vector<std::uint32_t>& expected_shape) const {
    Tensor t = load_tensor(file);
    if (!expected_shape.empty() && t.dims != expected_shape) {
        throw std::runtime_error(file.string() + ": shape " + shape_str(t.dims) +
                                 " does not match manifest " + shape_str(expected_shape));
    }
    return t;
}

Tensor RecordedRun::load_generation(const std::string& sample_id, const std::string& class_name,
                                    std::size_t timestep) const {
    const auto& g = generation(sample_id, class_name, timestep);
    return load_checked(sample_dir(sample_id) / g.file, g.shape);
}

Tensor RecordedRun::load_original_features(const std::string& sample_id) const {
    const auto& s = sample(sample_id);
    return load_checked(sample_dir(sample_id) / s.original_features, s.feature_grid);
}

Tensor RecordedRun::load_generated_features(const std::string& sample_id,
                                            const std::string& class_name,
                                            std::optional<std::size_t> timestep) const {
    const auto& s = sample(sample_id);
    if (timestep) {
        // Same precedence as generation(), but a missing entry is not an error here.
        const RecordedGeneration* match = nullptr;
        for (const auto& g : s.generations) {
            if (g.timestep != *timestep || g.features.empty()) continue;
            if (g.class_name == class_name) {
                match = &g;
                break;
            }
            if (g.class_name.empty() && !match) match = &g;
        }
        if (match) return load_checked(sample_dir(sample_id) / match->features, s.feature_grid);
    }
    const auto it = s.generated_features.find(class_name);
    const std::filesystem::path file =
        it != s.generated_features.end() ? it->second : std::filesystem::path("feat_gen_" + class_name + ".g4tn");
    return load_checked(sample_dir(sample_id) / file, s.feature_grid);
}

}  // namespace segrefine
