// SPDX-License-Identifier: Apache-2.0
// numpy-facing bindings. Arrays are C-contiguous copies; shapes follow the C++ row-major layouts.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "segrefine/attention.hpp"
#include "segrefine/correspondence.hpp"
#include "segrefine/diffusion.hpp"
#include "segrefine/evaluation.hpp"
#include "segrefine/pipeline.hpp"
#include "segrefine/tensor_file.hpp"

namespace py = pybind11;
using namespace segrefine;

namespace {

template <class T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <class T>
Array<T> make_array(std::vector<py::ssize_t> shape, std::span<const T> src) {
    Array<T> out(shape);
    std::memcpy(out.mutable_data(), src.data(), src.size_bytes());
    return out;
}

void require_ndim(const py::array& a, py::ssize_t ndim, const char* what) {
    if (a.ndim() != ndim) throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(ndim) + "-d array");
}

ImageTensor to_image(const Array<double>& a) {
    require_ndim(a, 3, "image");
    return ImageTensor(a.shape(0), a.shape(1), a.shape(2), std::vector<double>(a.data(), a.data() + a.size()));
}

Array<double> from_image(const ImageTensor& img) {
    return make_array<double>({py::ssize_t(img.height()), py::ssize_t(img.width()), py::ssize_t(img.channels())}, img.data());
}

SoftMask to_mask(const Array<float>& a) {
    require_ndim(a, 2, "mask");
    return SoftMask(a.shape(0), a.shape(1), std::vector<float>(a.data(), a.data() + a.size()));
}

Array<float> from_mask(const SoftMask& m) {
    return make_array<float>({py::ssize_t(m.height()), py::ssize_t(m.width())}, m.values());
}

ClassIndexMask to_labels(const Array<std::uint8_t>& a) {
    require_ndim(a, 2, "labels");
    return ClassIndexMask(a.shape(0), a.shape(1), std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

FeatureMap to_features(const Array<float>& a) {
    require_ndim(a, 3, "features");
    return FeatureMap(a.shape(0), a.shape(1), a.shape(2), std::vector<float>(a.data(), a.data() + a.size()));
}

AttentionLogits to_logits(const Array<double>& q, const Array<double>& k) {
    require_ndim(q, 2, "query");
    require_ndim(k, 2, "key");
    if (q.shape(1) != k.shape(1)) throw std::invalid_argument("query/key head dimension mismatch");
    return AttentionLogits{std::size_t(q.shape(0)), std::size_t(k.shape(0)), std::size_t(q.shape(1)),
                           std::vector<double>(q.data(), q.data() + q.size()),
                           std::vector<double>(k.data(), k.data() + k.size())};
}

Array<double> from_weights(const AttentionWeights& w) {
    return make_array<double>({py::ssize_t(w.rows), py::ssize_t(w.cols)}, std::span<const double>(w.values));
}

NoiseSchedule schedule_arg(const py::object& alpha_bar) {
    if (alpha_bar.is_none()) return NoiseSchedule::linear();
    const auto a = alpha_bar.cast<Array<double>>();
    return NoiseSchedule(std::vector<double>(a.data(), a.data() + a.size()));
}

RunConfig config_arg(const std::map<std::string, std::string>& settings) {
    RunConfig cfg;
    for (const auto& [k, v] : settings) cfg.set(k, v);
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_segrefine, m) {
    m.doc() = "Coarse-mask refinement by one-step diffusion reconstruction and feature correspondence";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const std::out_of_range& e) {
            PyErr_SetString(PyExc_IndexError, e.what());
        }
    });

    m.def("linear_schedule", [](std::size_t steps, double b0, double b1) {
        const auto s = NoiseSchedule::linear(steps, b0, b1);
        return make_array<double>({py::ssize_t(s.alpha_bars().size())}, s.alpha_bars());
    }, py::arg("num_steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02,
       "Cumulative alpha_bar[0..T] of a linear beta schedule.");

    m.def("gaussian_noise", [](std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
        return from_image(gaussian_noise(h, w, c, seed));
    }, py::arg("height"), py::arg("width"), py::arg("channels"), py::arg("seed"));

    m.def("add_noise", [](const Array<double>& x0, std::size_t t, const Array<double>& eps, const py::object& ab) {
        return from_image(add_noise(to_image(x0), t, to_image(eps), schedule_arg(ab)));
    }, py::arg("x0"), py::arg("t"), py::arg("eps"), py::arg("alpha_bar") = py::none());

    m.def("predict_x0", [](const Array<double>& x_t, const Array<double>& eps, std::size_t t, const py::object& ab) {
        return from_image(predict_x0(to_image(x_t), to_image(eps), t, schedule_arg(ab)));
    }, py::arg("x_t"), py::arg("eps_hat"), py::arg("t"), py::arg("alpha_bar") = py::none());

    m.def("ddim_step", [](const Array<double>& x_t, const Array<double>& eps, std::size_t t, std::size_t t_prev,
                          double sigma, std::uint64_t seed, const py::object& ab) {
        return from_image(ddim_step(to_image(x_t), to_image(eps), t, t_prev, schedule_arg(ab), sigma, seed));
    }, py::arg("x_t"), py::arg("eps_hat"), py::arg("t"), py::arg("t_prev"), py::arg("sigma") = 0.0,
       py::arg("seed") = 0, py::arg("alpha_bar") = py::none());

    m.def("inject_attention", [](const Array<double>& q, const Array<double>& k, const Array<std::uint8_t>& bias,
                                 double alpha) {
        const auto logits = to_logits(q, k);
        require_ndim(bias, 2, "bias");
        if (std::size_t(bias.shape(0)) != logits.q || std::size_t(bias.shape(1)) != logits.k)
            throw std::invalid_argument("bias shape must be (queries, keys)");
        const InjectionMask mask(logits.q, logits.k, InjectionKind::kCross,
                                 std::span<const std::uint8_t>(bias.data(), bias.size()));
        return from_weights(inject_attention(logits, mask, alpha));
    }, py::arg("query"), py::arg("key"), py::arg("bias"), py::arg("alpha"),
       "softmax((Q K^T + alpha * bias) / sqrt(d)) with a {0,1} bias matrix.");

    m.def("vanilla_attention", [](const Array<double>& q, const Array<double>& k) {
        return from_weights(vanilla_attention(to_logits(q, k)));
    }, py::arg("query"), py::arg("key"));

    m.def("class_token_indices", [](const std::string& prompt, const std::string& cls) {
        const auto s = class_token_indices(prompt, cls);
        return std::vector<std::size_t>(s.indices().begin(), s.indices().end());
    }, py::arg("prompt"), py::arg("class_name"));

    m.def("normalize_features", [](const Array<float>& f) {
        const auto n = normalize_features(to_features(f));
        return make_array<float>({py::ssize_t(n.height()), py::ssize_t(n.width()), py::ssize_t(n.dim())}, n.data());
    }, py::arg("features"));

    m.def("find_correspondence", [](const Array<float>& orig, const Array<float>& gen, std::size_t workers,
                                    bool brute_force) {
        const auto o = normalize_features(to_features(orig)), g = normalize_features(to_features(gen));
        CorrespondenceMap map;
        {
            py::gil_scoped_release release;
            map = brute_force ? find_correspondence_bruteforce(o, g) : find_correspondence(o, g, workers);
        }
        return make_array<std::uint32_t>({py::ssize_t(map.height), py::ssize_t(map.width)},
                                         std::span<const std::uint32_t>(map.index));
    }, py::arg("original"), py::arg("generated"), py::arg("workers") = 1, py::arg("brute_force") = false,
       "Flat index of the most cosine-similar original pixel for every generated pixel.");

    m.def("mix_probabilities", [](const Array<float>& mask, const Array<std::uint32_t>& delta, float beta,
                                  float cf_low, float cf_high) {
        const auto s = to_mask(mask);
        require_ndim(delta, 2, "correspondence");
        const CorrespondenceMap map{std::size_t(delta.shape(0)), std::size_t(delta.shape(1)),
                                    std::vector<std::uint32_t>(delta.data(), delta.data() + delta.size())};
        return from_mask(mix_probabilities(s, map, MixConfig{beta, cf_low, cf_high}));
    }, py::arg("mask"), py::arg("correspondence"), py::arg("beta") = 0.8f, py::arg("cf_low") = 0.2f,
       py::arg("cf_high") = 0.6f);

    m.def("iou", [](const Array<std::uint8_t>& pred, const Array<std::uint8_t>& gt, std::uint8_t c) {
        return iou(to_labels(pred), to_labels(gt), c);
    }, py::arg("pred"), py::arg("gt"), py::arg("class_id"));

    m.def("mean_iou", [](const std::vector<Array<std::uint8_t>>& preds, const std::vector<Array<std::uint8_t>>& gts,
                         std::size_t num_classes) {
        std::vector<ClassIndexMask> p, g;
        for (const auto& a : preds) p.push_back(to_labels(a));
        for (const auto& a : gts) g.push_back(to_labels(a));
        const auto r = mean_iou(p, g, num_classes);
        return py::make_tuple(r.mean_iou, r.per_class_iou);
    }, py::arg("preds"), py::arg("gts"), py::arg("num_classes"),
       "Dataset-accumulated mIoU and per-class IoU (None where a class has no union).");

    m.def("read_tensor", [](const std::filesystem::path& p) {
        const auto t = load_tensor(p);
        std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
        return make_array<float>(shape, std::span<const float>(t.data));
    }, py::arg("path"));

    m.def("write_tensor", [](const std::filesystem::path& p, const Array<float>& a) {
        Tensor t;
        for (py::ssize_t i = 0; i < a.ndim(); ++i) t.dims.push_back(static_cast<std::uint32_t>(a.shape(i)));
        t.data.assign(a.data(), a.data() + a.size());
        save_tensor(p, t);
    }, py::arg("path"), py::arg("array"));

    m.def("refine_dataset", [](const std::filesystem::path& root, const std::filesystem::path& out,
                               const std::map<std::string, std::string>& settings) {
        const auto cfg = config_arg(settings);
        const auto layout = DatasetLayout::open(root);
        RunSummary s;
        {
            py::gil_scoped_release release;
            s = run_refinement(layout, cfg, out);
        }
        return s.report.dump();
    }, py::arg("root"), py::arg("out"), py::arg("settings") = std::map<std::string, std::string>{},
       "Runs the refinement pipeline; returns report.json as a string.");

    m.def("config_help", &RunConfig::help);
}
