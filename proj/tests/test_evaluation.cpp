// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <random>

#include "segrefine/evaluation.hpp"
#include "support.hpp"

using namespace segrefine;

namespace {

ClassIndexMask random_labels(std::mt19937_64& rng, std::size_t n, std::size_t classes, bool ignore) {
    ClassIndexMask m(n, n);
    for (std::size_t j = 0; j < m.size(); ++j) {
        std::uint8_t v = static_cast<std::uint8_t>(rng() % classes);
        if (ignore && rng() % 10 == 0) v = kIgnoreLabel;
        m.set(j, v);
    }
    return m;
}

// Pixel counting straight from the definition.
std::pair<std::uint64_t, std::uint64_t> count(const std::vector<ClassIndexMask>& preds,
                                              const std::vector<ClassIndexMask>& gts, std::uint8_t c) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
        for (std::size_t j = 0; j < gts[s].size(); ++j) {
            if (gts[s][j] == kIgnoreLabel) continue;
            inter += preds[s][j] == c && gts[s][j] == c;
            uni += preds[s][j] == c || gts[s][j] == c;
        }
    }
    return {inter, uni};
}

// Foreground mask with `fg` object pixels of which `hit` are predicted.
std::pair<ClassIndexMask, ClassIndexMask> with_iou(std::size_t hit, std::size_t fg) {
    ClassIndexMask gt(10, 10), pred(10, 10);
    for (std::size_t j = 0; j < fg; ++j) gt.set(j, 1);
    for (std::size_t j = 0; j < hit; ++j) pred.set(j, 1);
    return {pred, gt};
}

}  // namespace

TEST_CASE("class assembly") {
    std::map<std::uint8_t, SoftMask> one{{3, SoftMask(2, 2, 0.9f)}};
    CHECK(assemble_class_mask(one, 0.5f) == ClassIndexMask(2, 2, 3));
    std::map<std::uint8_t, SoftMask> low{{3, SoftMask(2, 2, 0.4f)}, {5, SoftMask(2, 2, 0.49f)}};
    CHECK(assemble_class_mask(low, 0.5f) == ClassIndexMask(2, 2, 0));
    std::map<std::uint8_t, SoftMask> tie{{7, SoftMask(1, 1, 0.6f)}, {2, SoftMask(1, 1, 0.6f)}};
    CHECK(assemble_class_mask(tie, 0.5f)[0] == 2);
    CHECK_THROWS_AS(assemble_class_mask({{0, SoftMask(1, 1)}}, 0.5f), std::invalid_argument);
    CHECK_THROWS_AS(assemble_class_mask({{1, SoftMask(1, 1)}, {2, SoftMask(1, 2)}}, 0.5f), std::invalid_argument);

    std::mt19937_64 rng(1);
    for (int iter = 0; iter < 50; ++iter) {
        const SoftMask a(8, 8, testing::random_floats(rng, 64));
        const SoftMask b(8, 8, testing::random_floats(rng, 64));
        const float tau = std::uniform_real_distribution<float>(0.1f, 0.9f)(rng);
        const auto out = assemble_class_mask({{1, a}, {2, b}}, tau);
        for (std::size_t j = 0; j < 64; ++j) {
            const std::uint8_t arg = b[j] > a[j] ? 2 : 1;
            const float best = std::max(a[j], b[j]);
            REQUIRE(out[j] == (best >= tau ? arg : 0));
        }
        // Scaling all maps and the threshold by the same factor keeps the labels.
        std::vector<float> as(a.values().begin(), a.values().end()), bs(b.values().begin(), b.values().end());
        for (auto& v : as) v *= 0.5f;
        for (auto& v : bs) v *= 0.5f;
        CHECK(assemble_class_mask({{1, SoftMask(8, 8, as)}, {2, SoftMask(8, 8, bs)}}, tau * 0.5f) == out);
    }
}

TEST_CASE("IoU of hand-countable masks") {
    std::mt19937_64 rng(2);
    const auto m = random_labels(rng, 16, 4, false);
    for (std::uint8_t c = 0; c < 4; ++c) {
        if (iou(m, m, c)) CHECK(*iou(m, m, c) == 1.0);
    }
    auto [half, gt] = with_iou(25, 50);
    CHECK(*iou(half, gt, 1) == 0.5);
    CHECK_FALSE(iou(gt, gt, 9).has_value());

    ClassIndexMask a(1, 4, {1, 1, 0, 0}), b(1, 4, {0, 0, 1, 1});
    CHECK(*iou(a, b, 1) == 0.0);
}

TEST_CASE("IoU matches pixel counting and is symmetric and bounded") {
    std::mt19937_64 rng(3);
    for (int iter = 0; iter < 100; ++iter) {
        const auto p = random_labels(rng, 16, 5, false);
        const auto g = random_labels(rng, 16, 5, false);
        for (std::uint8_t c = 0; c < 5; ++c) {
            const auto [i, u] = count({p}, {g}, c);
            const auto v = iou(p, g, c);
            REQUIRE(v.has_value() == (u > 0));
            if (!v) continue;
            CHECK(*v == double(i) / double(u));
            CHECK(*v == *iou(g, p, c));
            CHECK((*v >= 0.0 && *v <= 1.0));
        }
    }
}

TEST_CASE("mean IoU accumulates over the dataset") {
    ClassIndexMask gt(1, 4, {1, 1, 2, 2});
    CHECK(mean_iou(std::vector{gt}, std::vector{gt}, 3).mean_iou == 1.0);

    // Class 1 perfect, class 2 fully missed (predicted as 0): background IoU 0/2.
    ClassIndexMask pred(1, 4, {1, 1, 0, 0});
    const auto r = mean_iou(std::vector{pred}, std::vector{ClassIndexMask(1, 4, {1, 1, 2, 2})}, 3);
    CHECK(*r.per_class_iou[1] == 1.0);
    CHECK(*r.per_class_iou[2] == 0.0);
    CHECK(*r.per_class_iou[0] == 0.0);
    CHECK(r.mean_iou == doctest::Approx(1.0 / 3.0));

    // Class 2 predicted as void: only classes 1 and 2 have a union, giving (1 + 0) / 2.
    ClassIndexMask p2(1, 4, {1, 1, kIgnoreLabel, kIgnoreLabel}), g2(1, 4, {1, 1, 2, 2});
    const auto r2 = mean_iou(std::vector{p2}, std::vector{g2}, 3);
    CHECK_FALSE(r2.per_class_iou[0].has_value());
    CHECK(r2.mean_iou == 0.5);

    std::mt19937_64 rng(4);
    std::vector<ClassIndexMask> preds, gts;
    for (int s = 0; s < 10; ++s) {
        preds.push_back(random_labels(rng, 16, 6, false));
        gts.push_back(random_labels(rng, 16, 6, true));
    }
    const auto report = mean_iou(preds, gts, 6);
    double sum = 0;
    int present = 0;
    for (std::uint8_t c = 0; c < 6; ++c) {
        const auto [i, u] = count(preds, gts, c);
        CHECK(report.counts[c].intersection == i);
        CHECK(report.counts[c].union_ == u);
        if (u) {
            CHECK(*report.per_class_iou[c] == double(i) / double(u));
            sum += double(i) / double(u);
            ++present;
        }
    }
    CHECK(report.mean_iou == doctest::Approx(sum / present).epsilon(1e-12));

    std::reverse(preds.begin(), preds.end());
    std::reverse(gts.begin(), gts.end());
    CHECK(mean_iou(preds, gts, 6).counts == report.counts);

    CHECK_THROWS_AS(mean_iou(preds, std::span(gts).first(3), 6), std::invalid_argument);
    CHECK_THROWS_AS(mean_iou(preds, gts, 3), std::invalid_argument);
}

TEST_CASE("reports render as JSON and table") {
    const auto r = mean_iou(std::vector{ClassIndexMask(1, 2, {0, 1})}, std::vector{ClassIndexMask(1, 2, {0, 1})}, 3);
    const auto j = r.to_json({"background", "cat", "dog"});
    CHECK(j["classes"][1]["name"] == "cat");
    CHECK(j["classes"][2]["iou"].is_null());
    CHECK(r.to_table({"background", "cat", "dog"}).find("mIoU(%) 100.00") != std::string::npos);
}

TEST_CASE("stratified gain bands") {
    auto [p55, g55] = with_iou(55, 100);
    CHECK(sample_foreground_iou(p55, g55) == 55.0);
    CHECK(band_index(55.0, default_gain_bands()) == 1);
    CHECK(band_index(40.0, default_gain_bands()) == 1);
    CHECK(band_index(80.0, default_gain_bands()) == 2);
    CHECK(band_index(100.0, default_gain_bands()) == 2);
    CHECK(band_index(0.0, default_gain_bands()) == 0);
    CHECK(sample_foreground_iou(ClassIndexMask(2, 2), ClassIndexMask(2, 2)) == 100.0);

    const std::vector<ClassIndexMask> one_pred{p55}, one_gt{g55};
    const auto same = stratified_gain(one_pred, one_pred, one_gt);
    CHECK(same.total_samples == 1);
    CHECK(same.bands[1].sample_count == 1);
    for (const auto& b : same.bands) CHECK(b.mean_gain == 0.0);

    // Six samples with initial IoU 10, 30, 50, 70, 90, 100 and refined IoU 20, 30, 60, 60, 100, 100.
    const std::vector<std::pair<std::size_t, std::size_t>> plan{{10, 20}, {30, 30}, {50, 60}, {70, 60}, {90, 100}, {100, 100}};
    std::vector<ClassIndexMask> initial, refined, gts;
    for (auto [a, b] : plan) {
        auto [pa, g] = with_iou(a, 100);
        auto [pb, g2] = with_iou(b, 100);
        initial.push_back(pa);
        refined.push_back(pb);
        gts.push_back(g);
    }
    const auto r = stratified_gain(initial, refined, gts);
    REQUIRE(r.bands.size() == 3);
    CHECK(r.bands[0].sample_count == 2);
    CHECK(r.bands[1].sample_count == 2);
    CHECK(r.bands[2].sample_count == 2);
    CHECK(r.bands[0].mean_initial == 20.0);
    CHECK(r.bands[0].mean_gain == 5.0);
    CHECK(r.bands[1].mean_gain == 0.0);
    CHECK(r.bands[2].mean_gain == 5.0);
    std::size_t total = 0;
    for (const auto& b : r.bands) total += b.sample_count;
    CHECK(total == r.total_samples);

    const auto acc = stratified_gain(initial, refined, gts, default_gain_bands(), GainAveraging::kAccumulated);
    CHECK(acc.bands[0].mean_initial == 20.0);  // 40 / 200
    CHECK(acc.bands[0].mean_gain == 5.0);

    CHECK(r.to_json()["bands"][1]["low"] == 40.0);
    CHECK(r.to_table().find("+5.00") != std::string::npos);
    CHECK_THROWS_AS(stratified_gain(initial, refined, gts, {{0, 50}, {60, 100}}), std::invalid_argument);
}
