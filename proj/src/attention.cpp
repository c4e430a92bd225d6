// SPDX-License-Identifier: Apache-2.0
#include "segrefine/attention.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "segrefine/resample.hpp"

namespace segrefine {

InjectionMask::InjectionMask(std::size_t rows, std::size_t cols, InjectionKind kind)
    : rows_(rows), cols_(cols), kind_(kind), words_((rows * cols + 63) / 64, 0) {
    if (kind == InjectionKind::kSelf && rows != cols) {
        throw std::invalid_argument("self-attention injection mask must be square");
    }
}

InjectionMask::InjectionMask(std::size_t rows, std::size_t cols, InjectionKind kind,
                             std::span<const std::uint8_t> dense)
    : InjectionMask(rows, cols, kind) {
    if (dense.size() != rows * cols) throw std::invalid_argument("injection mask: length mismatch");
    for (std::size_t b = 0; b < dense.size(); ++b) {
        if (dense[b] > 1) throw std::invalid_argument("injection mask: values must be 0 or 1");
        if (dense[b]) words_[b >> 6] |= std::uint64_t{1} << (b & 63);
    }
    if (kind == InjectionKind::kSelf && !is_symmetric()) {
        throw std::invalid_argument("self-attention injection mask must be symmetric");
    }
}

void InjectionMask::set(std::size_t i, std::size_t j, bool v) {
    if (i >= rows_ || j >= cols_) throw std::out_of_range("injection mask index");
    const std::size_t b = i * cols_ + j;
    const std::uint64_t bit = std::uint64_t{1} << (b & 63);
    if (v) {
        words_[b >> 6] |= bit;
    } else {
        words_[b >> 6] &= ~bit;
    }
}

std::size_t InjectionMask::popcount() const {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

bool InjectionMask::is_symmetric() const {
    if (rows_ != cols_) return false;
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = i + 1; j < cols_; ++j) {
            if (get(i, j) != get(j, i)) return false;
        }
    }
    return true;
}

std::vector<std::uint8_t> InjectionMask::to_dense() const {
    std::vector<std::uint8_t> out(rows_ * cols_);
    for (std::size_t b = 0; b < out.size(); ++b) out[b] = (words_[b >> 6] >> (b & 63)) & 1u;
    return out;
}

InjectionMask build_cross_injection(std::span<const std::uint8_t> foreground,
                                    const TokenIndexSet& tokens, std::size_t key_length) {
    tokens.check_bound(key_length);
    InjectionMask mask(foreground.size(), key_length, InjectionKind::kCross);
    for (std::size_t i = 0; i < foreground.size(); ++i) {
        if (foreground[i] > 1) throw std::invalid_argument("foreground mask must be 0/1");
        if (!foreground[i]) continue;
        for (auto j : tokens.indices()) mask.set(i, j, true);
    }
    return mask;
}

InjectionMask build_self_injection(std::span<const std::uint8_t> foreground) {
    std::vector<std::size_t> on;
    for (std::size_t i = 0; i < foreground.size(); ++i) {
        if (foreground[i] > 1) throw std::invalid_argument("foreground mask must be 0/1");
        if (foreground[i]) on.push_back(i);
    }
    InjectionMask mask(foreground.size(), foreground.size(), InjectionKind::kSelf);
    for (auto i : on) {
        for (auto j : on) mask.set(i, j, true);
    }
    return mask;
}

namespace {

AttentionWeights attend(const AttentionLogits& logits, const InjectionMask* bias, double alpha) {
    if (logits.d == 0) throw std::invalid_argument("attention: head dimension must be positive");
    if (logits.query.size() != logits.q * logits.d || logits.key.size() != logits.k * logits.d) {
        throw std::invalid_argument("attention: Q/K length does not match declared shape");
    }
    if (bias && (bias->rows() != logits.q || bias->cols() != logits.k)) {
        throw std::invalid_argument("attention: injection mask is " + std::to_string(bias->rows()) +
                                    "x" + std::to_string(bias->cols()) + ", logits are " +
                                    std::to_string(logits.q) + "x" + std::to_string(logits.k));
    }
    if (!std::isfinite(alpha)) throw std::invalid_argument("attention: injection weight must be finite");

    const double scale = 1.0 / std::sqrt(static_cast<double>(logits.d));
    AttentionWeights out{logits.q, logits.k, std::vector<double>(logits.q * logits.k)};
    for (std::size_t i = 0; i < logits.q; ++i) {
        const double* qi = logits.query.data() + i * logits.d;
        double* row = out.values.data() + i * logits.k;
        double row_max = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.k; ++j) {
            const double* kj = logits.key.data() + j * logits.d;
            double dot = 0.0;
            for (std::size_t c = 0; c < logits.d; ++c) dot += qi[c] * kj[c];
            if (bias && bias->get(i, j)) dot += alpha;
            row[j] = dot * scale;
            row_max = std::max(row_max, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.k; ++j) {
            row[j] = std::exp(row[j] - row_max);
            sum += row[j];
        }
        for (std::size_t j = 0; j < logits.k; ++j) row[j] /= sum;
    }
    return out;
}

}  // namespace

AttentionWeights inject_attention(const AttentionLogits& logits, const InjectionMask& bias,
                                  double alpha_inject) {
    return attend(logits, &bias, alpha_inject);
}

AttentionWeights vanilla_attention(const AttentionLogits& logits) {
    return attend(logits, nullptr, 0.0);
}

std::vector<GridSize> parse_grid_list(std::string_view text) {
    std::vector<GridSize> grids;
    std::size_t pos = 0;
    auto parse_num = [](std::string_view s) {
        if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
            throw std::invalid_argument("bad grid size '" + std::string(s) + "'");
        }
        return static_cast<std::size_t>(std::stoull(std::string(s)));
    };
    while (pos <= text.size()) {
        auto end = text.find(',', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view item = text.substr(pos, end - pos);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (!item.empty()) {
            const auto x = item.find_first_of("xX");
            GridSize g;
            if (x == std::string_view::npos) {
                g.height = g.width = parse_num(item);
            } else {
                g.height = parse_num(item.substr(0, x));
                g.width = parse_num(item.substr(x + 1));
            }
            if (g.height == 0 || g.width == 0) throw std::invalid_argument("grid size must be positive");
            grids.push_back(g);
        }
        pos = end + 1;
    }
    return grids;
}

std::vector<InjectionPair> prepare_injection_set(const SoftMask& coarse, float tau_bin,
                                                 const TokenIndexSet& tokens,
                                                 std::size_t key_length,
                                                 std::span<const GridSize> resolutions) {
    if (resolutions.empty()) throw std::invalid_argument("prepare_injection_set: empty resolution list");
    const BinaryMask binary = binarize(coarse, tau_bin);
    std::vector<InjectionPair> set;
    set.reserve(resolutions.size());
    for (const auto& grid : resolutions) {
        if (grid.height == 0 || grid.width == 0) {
            throw std::invalid_argument("prepare_injection_set: zero-sized resolution");
        }
        BinaryMask fg = resample_mask(binary, grid.height, grid.width);
        InjectionMask cross = build_cross_injection(fg.bits(), tokens, key_length);
        InjectionMask self = build_self_injection(fg.bits());
        set.push_back(InjectionPair{grid, std::move(fg), std::move(cross), std::move(self)});
    }
    return set;
}

std::string make_prompt(std::string_view class_name) {
    return "A photo of " + std::string(class_name);
}

std::vector<std::string> tokenize_prompt(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            flush();
            if (!std::isspace(c)) tokens.emplace_back(1, ch);
        }
    }
    flush();
    return tokens;
}

TokenIndexSet class_token_indices(std::string_view prompt, std::string_view class_name,
                                  std::size_t key_length) {
    const auto words = tokenize_prompt(prompt);
    const auto needle = tokenize_prompt(class_name);
    std::vector<std::size_t> hits;
    if (!needle.empty() && needle.size() <= words.size()) {
        for (std::size_t s = 0; s + needle.size() <= words.size(); ++s) {
            if (std::equal(needle.begin(), needle.end(), words.begin() + static_cast<std::ptrdiff_t>(s))) {
                for (std::size_t k = 0; k < needle.size(); ++k) hits.push_back(s + k + 1);
            }
        }
    }
    TokenIndexSet set(std::move(hits));
    set.check_bound(key_length);
    return set;
}

}  // namespace segrefine
