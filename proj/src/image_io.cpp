// SPDX-License-Identifier: Apache-2.0
#include "segrefine/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace segrefine {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err) *err = msg;
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

// Decoded 8-bit rows plus the header fields the callers need.
struct DecodedPng {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
    int color_type = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;
};

DecodedPng decode(const std::filesystem::path& path, bool keep_palette_indices) {
    auto file = open_file(path, "rb");
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    if (!png) throw std::runtime_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    DecodedPng out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path.string() + ": png decode failed: " + err);
    }
    png_init_io(png, file.get());
    png_read_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (bit_depth < 8) png_set_packing(png);
    if (out.color_type == PNG_COLOR_TYPE_PALETTE && !keep_palette_indices) png_set_palette_to_rgb(png);
    if (out.color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8 && !keep_palette_indices) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (!keep_palette_indices) {
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
        if (out.color_type == PNG_COLOR_TYPE_GRAY || out.color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_gray_to_rgb(png);
        }
    }
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    out.channels = png_get_channels(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    out.pixels.resize(stride * out.height);
    rows.resize(out.height);
    for (png_uint_32 y = 0; y < out.height; ++y) rows[y] = out.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void encode(const std::filesystem::path& path, png_uint_32 width, png_uint_32 height,
            int color_type, const std::vector<std::uint8_t>& pixels, std::size_t stride,
            const std::array<Rgb8, 256>* palette) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto file = open_file(path, "wb");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    if (!png) throw std::runtime_error("png: out of memory");
    png_infop info = png_create_info_struct(png);
    std::vector<png_color> colors;
    std::vector<png_bytep> rows(height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(path.string() + ": png encode failed: " + err);
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (palette) {
        colors.resize(palette->size());
        for (std::size_t i = 0; i < palette->size(); ++i) {
            colors[i] = png_color{(*palette)[i][0], (*palette)[i][1], (*palette)[i][2]};
        }
        png_set_PLTE(png, info, colors.data(), static_cast<int>(colors.size()));
    }
    // Fixed settings keep the output byte-stable across runs.
    png_set_compression_level(png, 6);
    png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_NONE);
    png_write_info(png, info);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(pixels.data() + y * stride);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

const std::array<Rgb8, 256>& voc_palette() {
    static const std::array<Rgb8, 256> palette = [] {
        std::array<Rgb8, 256> p{};
        for (int i = 0; i < 256; ++i) {
            int r = 0, g = 0, b = 0, c = i;
            for (int j = 0; j < 8; ++j) {
                r |= ((c >> 0) & 1) << (7 - j);
                g |= ((c >> 1) & 1) << (7 - j);
                b |= ((c >> 2) & 1) << (7 - j);
                c >>= 3;
            }
            p[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                    static_cast<std::uint8_t>(b)};
        }
        return p;
    }();
    return palette;
}

void write_indexed_png(const std::filesystem::path& path, const ClassIndexMask& mask) {
    std::vector<std::uint8_t> pixels(mask.labels().begin(), mask.labels().end());
    encode(path, static_cast<png_uint_32>(mask.width()), static_cast<png_uint_32>(mask.height()),
           PNG_COLOR_TYPE_PALETTE, pixels, mask.width(), &voc_palette());
}

ClassIndexMask read_indexed_png(const std::filesystem::path& path) {
    auto png = decode(path, true);
    if (png.color_type != PNG_COLOR_TYPE_PALETTE && png.color_type != PNG_COLOR_TYPE_GRAY) {
        throw std::runtime_error(path.string() + ": expected a palette or greyscale PNG");
    }
    return ClassIndexMask(png.height, png.width, std::move(png.pixels));
}

ImageTensor read_rgb_png(const std::filesystem::path& path) {
    const auto png = decode(path, false);
    if (png.channels != 3) throw std::runtime_error(path.string() + ": could not convert to RGB");
    std::vector<double> data(png.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = png.pixels[i] / 255.0;
    return ImageTensor(png.height, png.width, 3, std::move(data));
}

void write_rgb_png(const std::filesystem::path& path, const ImageTensor& img) {
    if (img.channels() != 1 && img.channels() != 3) {
        throw std::invalid_argument("write_rgb_png: need 1 or 3 channels, got " +
                                    std::to_string(img.channels()));
    }
    std::vector<std::uint8_t> pixels(img.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = to_byte(img.data()[i]);
    encode(path, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
           img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, pixels,
           img.width() * img.channels(), nullptr);
}

}  // namespace segrefine
