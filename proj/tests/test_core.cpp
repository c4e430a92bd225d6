// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "segrefine/image_io.hpp"
#include "segrefine/resample.hpp"
#include "segrefine/tensor_file.hpp"
#include "segrefine/types.hpp"
#include "support.hpp"

using namespace segrefine;
using segrefine::testing::TempDir;

namespace {

template <typename F>
std::string error_of(F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("validate_image accepts zeros and rejects non-finite, bad length and out-of-range") {
    CHECK_NOTHROW(validate_image(ImageTensor(2, 2, 3)));

    std::vector<double> nan(12, 0.0);
    nan[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK(contains(error_of([&] { ImageTensor(2, 2, 3, nan); }), "non-finite"));
    CHECK(contains(error_of([&] { validate_image(2, 2, 3, nan); }), "non-finite"));

    CHECK(contains(error_of([] { ImageTensor(2, 2, 3, std::vector<double>(11)); }), "length mismatch"));
    CHECK(contains(error_of([] { validate_image(2, 2, 3, std::vector<double>(11)); }), "length mismatch"));

    ImageTensor big(1, 1, 1, {1.5});
    CHECK_THROWS_AS(validate_image(big), std::invalid_argument);
    CHECK_THROWS_AS(ImageTensor(0, 2, 3), std::invalid_argument);
}

TEST_CASE("mask types enforce their value sets") {
    CHECK_THROWS_AS(SoftMask(2, 2, std::vector<float>{0, 1, 1.01f, 0}), std::invalid_argument);
    CHECK_THROWS_AS(SoftMask(2, 2, std::vector<float>{0, 1, -0.1f, 0}), std::invalid_argument);
    CHECK_THROWS_AS(SoftMask(2, 2, std::vector<float>(3)), std::invalid_argument);
    SoftMask m(2, 2, 0.5f);
    CHECK_THROWS_AS(m.set(0, 2.0f), std::invalid_argument);
    CHECK_THROWS_AS(m.set(0, std::nanf("")), std::invalid_argument);

    CHECK_THROWS_AS(BinaryMask(1, 2, {0, 2}), std::invalid_argument);
    CHECK(BinaryMask(1, 3, {1, 0, 1}).count() == 2);

    const auto b = binarize(SoftMask(1, 3, std::vector<float>{0.49f, 0.5f, 0.51f}), 0.5f);
    CHECK(b == BinaryMask(1, 3, {0, 1, 1}));
    CHECK(to_soft(b).values()[1] == 1.0f);

    ClassIndexMask labels(1, 3, {0, 4, kIgnoreLabel});
    CHECK_NOTHROW(labels.check_labels(5));
    CHECK_THROWS_AS(labels.check_labels(4), std::invalid_argument);
}

TEST_CASE("fuzzed constructors reject exactly the invariant-violating inputs") {
    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 300; ++iter) {
        const std::size_t h = testing::random_size(rng, 1, 5), w = testing::random_size(rng, 1, 5);
        auto v = testing::random_floats(rng, h * w, -0.5f, 1.5f);
        const bool valid = std::all_of(v.begin(), v.end(), [](float x) { return x >= 0.0f && x <= 1.0f; });
        if (valid) {
            CHECK_NOTHROW(SoftMask(h, w, v));
        } else {
            CHECK_THROWS_AS(SoftMask(h, w, v), std::invalid_argument);
        }
        std::vector<double> d(v.begin(), v.end());
        const std::size_t c = testing::random_size(rng, 1, 3);
        d.resize(h * w * c, 0.25);
        if (valid) {
            CHECK_NOTHROW(validate_image(ImageTensor(h, w, c, d)));
        } else {
            CHECK_THROWS_AS(validate_image(ImageTensor(h, w, c, d)), std::invalid_argument);
        }
        const bool drop = rng() & 1;
        if (drop) d.pop_back();
        if (drop) CHECK_THROWS_AS(ImageTensor(h, w, c, d), std::invalid_argument);
    }
}

TEST_CASE("noise schedule invariants") {
    const auto s = NoiseSchedule::linear();
    REQUIRE(s.num_steps() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    for (std::size_t t = 1; t <= 1000; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) > 0.0);
    }
    // Cumulative product of (1 - beta), recomputed independently.
    double prod = 1.0;
    for (std::size_t t = 1; t <= 1000; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * double(t - 1) / 999.0);
    CHECK(s.alpha_bar(1000) == doctest::Approx(prod).epsilon(1e-12));
    CHECK_THROWS_AS(s.alpha_bar(1001), std::out_of_range);

    CHECK_THROWS_AS(NoiseSchedule({0.9, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule({1.0, 0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(NoiseSchedule({1.0, 0.0}), std::invalid_argument);
    CHECK_NOTHROW(NoiseSchedule({1.0, 0.25}));
}

TEST_CASE("token index sets are sorted, unique and bounded") {
    TokenIndexSet t({5, 1, 5, 3});
    CHECK(std::vector<std::size_t>(t.indices().begin(), t.indices().end()) == std::vector<std::size_t>{1, 3, 5});
    CHECK(t.contains(3));
    CHECK_FALSE(t.contains(2));
    CHECK_NOTHROW(t.check_bound(6));
    CHECK_THROWS_AS(t.check_bound(5), std::invalid_argument);
}

TEST_CASE("tensor file round trip and malformed input") {
    Tensor t{{2, 3}, {0, 1, 2, 3, 4, 5}};
    const auto bytes = write_tensor_file(t);
    REQUIRE(bytes.size() == 8 + 2 * 4 + 6 * 4);
    CHECK(std::memcmp(bytes.data(), "G4TN", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[5] == 2);
    CHECK(bytes[8] == 2);  // little-endian dim
    CHECK(read_tensor_file(bytes) == t);

    auto bad = bytes;
    std::memcpy(bad.data(), "XXXX", 4);
    CHECK(contains(error_of([&] { read_tensor_file(bad); }), "bad magic"));

    auto version = bytes;
    version[4] = 2;
    CHECK_THROWS_AS(read_tensor_file(version), std::runtime_error);

    auto trunc = write_tensor_file(Tensor{{4, 4}, std::vector<float>(16, 1.0f)});
    trunc.resize(trunc.size() - 4);  // 15 floats of payload
    CHECK(contains(error_of([&] { read_tensor_file(trunc); }), "truncated"));
    CHECK(contains(error_of([&] { read_tensor_file(std::vector<std::uint8_t>(5)); }), "truncated"));

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(read_tensor_file(trailing), std::runtime_error);

    CHECK_THROWS_AS(write_tensor_file(Tensor{{2, 2}, {1, 2, 3}}), std::invalid_argument);
}

TEST_CASE("tensor file round trip is bit-exact for random tensors") {
    std::mt19937_64 rng(11);
    for (int iter = 0; iter < 40; ++iter) {
        Tensor t;
        const std::size_t rank = testing::random_size(rng, 0, 4);
        std::size_t n = 1;
        for (std::size_t r = 0; r < rank; ++r) {
            t.dims.push_back(static_cast<std::uint32_t>(testing::random_size(rng, 1, 12)));
            n *= t.dims.back();
        }
        t.data.resize(n);
        for (auto& v : t.data) {
            std::uint32_t bits = static_cast<std::uint32_t>(rng());
            std::memcpy(&v, &bits, 4);
            if (!std::isfinite(v)) v = 0.0f;
        }
        const auto back = read_tensor_file(write_tensor_file(t));
        REQUIRE(back.dims == t.dims);
        CHECK(std::memcmp(back.data.data(), t.data.data(), n * 4) == 0);
    }
    // 10^6 elements.
    Tensor big{{100, 100, 10, 10}, testing::random_floats(rng, 1'000'000, -1e6f, 1e6f)};
    CHECK(read_tensor_file(write_tensor_file(big)) == big);

    TempDir dir("tensor");
    save_tensor(dir.path() / "a" / "b.g4tn", big);
    CHECK(load_tensor(dir.path() / "a" / "b.g4tn") == big);
    CHECK_THROWS_AS(load_tensor(dir.path() / "missing.g4tn"), std::runtime_error);
}

TEST_CASE("typed tensor views") {
    ImageTensor img(2, 3, 3, std::vector<double>(18, 0.25));
    CHECK(image_from_tensor(to_tensor(img)) == img);
    const auto grey = image_from_tensor(Tensor{{2, 2}, {0, 0.5f, 1, 0}});
    CHECK(grey.channels() == 1);
    SoftMask m(2, 2, std::vector<float>{0, 0.5f, 1, 0.25f});
    CHECK(soft_mask_from_tensor(to_tensor(m)) == m);
    CHECK_THROWS_AS(soft_mask_from_tensor(Tensor{{2, 2}, {0, 2, 0, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(soft_mask_from_tensor(Tensor{{2, 1, 2}, {0, 0, 0, 0}}), std::invalid_argument);
}

TEST_CASE("nearest resampling") {
    SoftMask m(2, 2, std::vector<float>{1, 0, 0, 1});
    const auto up = resample_mask(m, 4, 4);
    const std::vector<float> expect{1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1};
    CHECK(std::equal(up.values().begin(), up.values().end(), expect.begin()));
    CHECK(resample_mask(m, 2, 2) == m);

    // 3x3 -> 2x2: source index floor((i + 0.5) * 3 / 2) = {0, 2} per axis.
    SoftMask s(3, 3, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f});
    const auto down = resample_mask(s, 2, 2);
    for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t x = 0; x < 2; ++x) {
            const auto sy = static_cast<std::size_t>(std::floor((y + 0.5) * 3.0 / 2.0));
            const auto sx = static_cast<std::size_t>(std::floor((x + 0.5) * 3.0 / 2.0));
            CHECK(down.at(y, x) == s.at(sy, sx));
        }
    }
    CHECK(down.values()[0] == 0.1f);
    CHECK(down.values()[3] == 0.9f);
}

TEST_CASE("resampling preserves the value set and matches the centre-sampling oracle") {
    std::mt19937_64 rng(3);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t h = testing::random_size(rng, 1, 20), w = testing::random_size(rng, 1, 20);
        const std::size_t th = testing::random_size(rng, 1, 40), tw = testing::random_size(rng, 1, 40);
        std::vector<float> v(h * w);
        for (auto& x : v) x = static_cast<float>(testing::random_size(rng, 0, 4)) / 4.0f;
        const SoftMask m(h, w, v);
        const auto r = resample_mask(m, th, tw);
        const std::set<float> src(v.begin(), v.end());
        for (std::size_t y = 0; y < th; ++y) {
            for (std::size_t x = 0; x < tw; ++x) {
                const auto sy = std::min(h - 1, static_cast<std::size_t>(std::floor((y + 0.5) * double(h) / double(th))));
                const auto sx = std::min(w - 1, static_cast<std::size_t>(std::floor((x + 0.5) * double(w) / double(tw))));
                REQUIRE(r.at(y, x) == m.at(sy, sx));
                CHECK(src.count(r.at(y, x)));
            }
        }
        CHECK(resample_mask(r, th, tw) == r);
    }
    CHECK_THROWS_AS(resample_mask(SoftMask(2, 2), 0, 2), std::invalid_argument);
}

TEST_CASE("indexed PNG round trip with the VOC palette") {
    const auto& pal = voc_palette();
    CHECK(pal[0] == Rgb8{0, 0, 0});
    CHECK(pal[1] == Rgb8{128, 0, 0});
    CHECK(pal[15] == Rgb8{192, 128, 128});
    CHECK(pal[255] == Rgb8{224, 224, 192});

    TempDir dir("png");
    std::mt19937_64 rng(5);
    ClassIndexMask m(13, 17);
    for (std::size_t j = 0; j < m.size(); ++j) m.set(j, static_cast<std::uint8_t>(rng() % 21));
    m.set(0, kIgnoreLabel);
    write_indexed_png(dir.path() / "sub" / "m.png", m);
    CHECK(read_indexed_png(dir.path() / "sub" / "m.png") == m);

    ImageTensor rgb(4, 5, 3);
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb.mutable_data()[i] = double(i % 256) / 255.0;
    write_rgb_png(dir.path() / "rgb.png", rgb);
    const auto back = read_rgb_png(dir.path() / "rgb.png");
    REQUIRE(back.same_shape(rgb));
    for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(back.data()[i] == doctest::Approx(rgb.data()[i]).epsilon(1e-12));

    // RGB images carry no class indices.
    CHECK_THROWS_AS(read_indexed_png(dir.path() / "rgb.png"), std::runtime_error);
    CHECK_THROWS_AS(read_indexed_png(dir.path() / "missing.png"), std::runtime_error);
    std::ofstream(dir.path() / "junk.png") << "not a png";
    CHECK_THROWS_AS(read_rgb_png(dir.path() / "junk.png"), std::runtime_error);
}
