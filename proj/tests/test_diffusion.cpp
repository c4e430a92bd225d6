// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "segrefine/diffusion.hpp"
#include "support.hpp"

using namespace segrefine;

namespace {

// alpha_bar = {1, 0.81, 0.25}
NoiseSchedule tiny_schedule() { return NoiseSchedule({1.0, 0.81, 0.25}); }

ImageTensor pixel(double v) { return ImageTensor(1, 1, 1, {v}); }

ImageTensor random_image(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
    const auto v = testing::random_floats(rng, h * w * c);
    return ImageTensor(h, w, c, std::vector<double>(v.begin(), v.end()));
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

ConditionSpec injected(const SoftMask& coarse, double alpha) {
    ConditionSpec c;
    c.prompt = make_prompt("cat");
    c.tokens = class_token_indices(c.prompt, "cat");
    const std::vector<GridSize> grids{{coarse.height(), coarse.width()}, {2, 2}};
    c.injection = prepare_injection_set(coarse, 0.5f, c.tokens, kTextContextLength, grids);
    c.alpha_inject = alpha;
    return c;
}

}  // namespace

TEST_CASE("forward noising by hand") {
    const auto s = tiny_schedule();
    const auto x0 = pixel(0.8);
    CHECK(add_noise(x0, 0, pixel(0.4), s).data()[0] == 0.8);
    CHECK(add_noise(x0, 2, pixel(0.4), s).data()[0] == doctest::Approx(0.5 * 0.8 + std::sqrt(0.75) * 0.4));
    CHECK(add_noise(x0, 2, pixel(0.4), s).data()[0] == doctest::Approx(0.74641).epsilon(1e-5));
    CHECK(add_noise(x0, 2, pixel(0.0), s).data()[0] == 0.4);
    CHECK_THROWS_AS(add_noise(x0, 2, ImageTensor(1, 2, 1), s), std::invalid_argument);
}

TEST_CASE("one-step prediction by hand") {
    const auto s = tiny_schedule();
    CHECK(predict_x0(pixel(0.3), pixel(0.0), 2, s).data()[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(predict_x0(pixel(0.3), pixel(0.7), 0, s).data()[0] == 0.3);
}

TEST_CASE("noising round trip holds at every timestep of the default schedule") {
    const auto s = NoiseSchedule::linear();
    std::mt19937_64 rng(9);
    const auto x0 = random_image(rng, 8, 8, 3);
    for (std::size_t t = 0; t <= s.num_steps(); ++t) {
        const auto eps = gaussian_noise(8, 8, 3, t);
        const auto back = predict_x0(add_noise(x0, t, eps, s), eps, t, s);
        REQUIRE(max_abs_diff(back, x0) <= 1e-6);
    }
}

TEST_CASE("DDIM step") {
    const auto s = tiny_schedule();
    std::mt19937_64 rng(10);
    const auto x_t = random_image(rng, 3, 4, 3);
    const auto eps = gaussian_noise(3, 4, 3, 1);
    CHECK(ddim_step(x_t, eps, 2, 0, s, 0.0) == predict_x0(x_t, eps, 2, s));

    // alpha_bar 0.25 -> 0.81, x_t = 0.3, eps = 0.2:
    //   x0~ = (0.3 - sqrt(0.75) * 0.2) / 0.5 = 0.25358983848622454
    //   x'  = 0.9 * x0~ + sqrt(0.19) * 0.2  = 0.3154088335084156
    CHECK(ddim_step(pixel(0.3), pixel(0.2), 2, 1, s, 0.0).data()[0] ==
          doctest::Approx(0.3154088335084156).epsilon(1e-14));

    const auto stochastic_a = ddim_step(pixel(0.3), pixel(0.2), 2, 1, s, 0.1, 5);
    const auto stochastic_b = ddim_step(pixel(0.3), pixel(0.2), 2, 1, s, 0.1, 5);
    CHECK(stochastic_a == stochastic_b);

    CHECK_THROWS_AS(ddim_step(x_t, pixel(0.0), 2, 0, s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(x_t, eps, 1, 2, s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(x_t, eps, 2, 1, s, 0.5), std::invalid_argument);
}

TEST_CASE("seeded noise is reproducible and roughly standard normal") {
    const auto a = gaussian_noise(64, 64, 3, 42);
    CHECK(a == gaussian_noise(64, 64, 3, 42));
    CHECK_FALSE(a == gaussian_noise(64, 64, 3, 43));
    // Element i depends only on (seed, i): a prefix of a larger draw is the smaller draw.
    const auto small = gaussian_noise(1, 5, 1, 42);
    for (std::size_t i = 0; i < 5; ++i) CHECK(small.data()[i] == a.data()[i]);

    double mean = 0, sq = 0;
    for (double v : a.data()) {
        mean += v;
        sq += v * v;
    }
    mean /= double(a.size());
    const double var = sq / double(a.size()) - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("toy denoiser reconstructs its target for any seed and timestep") {
    const auto s = NoiseSchedule::linear();
    std::mt19937_64 rng(12);
    const auto fg = random_image(rng, 8, 8, 3);
    const auto bg = random_image(rng, 8, 8, 3);
    const ToyDenoiser toy(s, fg, bg);
    std::vector<float> m(64, 0.0f);
    for (std::size_t j = 0; j < 64; ++j) m[j] = (j % 8) < 4 ? 0.9f : 0.1f;
    const SoftMask coarse(8, 8, m);
    const auto cond = injected(coarse, 1.0);
    const auto mu = toy.target(cond);
    for (std::size_t p = 0; p < 64; ++p) {
        const auto& src = m[p] > 0.5f ? fg : bg;
        for (std::size_t k = 0; k < 3; ++k) REQUIRE(mu.data()[p * 3 + k] == src.data()[p * 3 + k]);
    }

    const auto x0 = random_image(rng, 8, 8, 3);
    for (std::size_t t : {1u, 100u, 400u, 999u}) {
        for (std::uint64_t seed : {0u, 1u, 77u}) {
            CHECK(max_abs_diff(one_step_reconstruct(x0, t, cond, toy, s, seed), mu) <= 1e-5);
        }
    }
    CHECK(one_step_reconstruct(x0, 400, cond, toy, s, 3) == one_step_reconstruct(x0, 400, cond, toy, s, 3));

    // No injection, or zero weight: background texture everywhere.
    CHECK(toy.target(ConditionSpec{}) == bg);
    CHECK(toy.target(injected(coarse, 0.0)) == bg);

    CHECK_THROWS_AS(one_step_reconstruct(x0, 0, cond, toy, s, 0), std::out_of_range);
    CHECK_THROWS_AS(one_step_reconstruct(x0, 1001, cond, toy, s, 0), std::out_of_range);
    CHECK(kDefaultTimestep == 400);
}

TEST_CASE("injection weight scales with the head dimension") {
    CHECK(injection_weight(1.0, 64) == 8.0);
    CHECK(injection_weight(0.0, 64) == 0.0);
    CHECK(injection_weight(2.0, 16) == 8.0);
}
