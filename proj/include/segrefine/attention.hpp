// SPDX-License-Identifier: Apache-2.0
//
// Explicit mask injection: binary attention biases built from a coarse
// foreground mask, added to the attention logits before the softmax.
//
//   cross[i, j] = 1  iff  token j names the class and image token i is foreground
//   self[i, j]  = 1  iff  image tokens i and j are both foreground
//   A' = softmax((Q K^T + alpha * bias) / sqrt(d))
//
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "segrefine/types.hpp"

namespace segrefine {

enum class InjectionKind { kCross, kSelf };

/// Bit-packed, row-major {0,1} matrix.
class InjectionMask {
public:
    InjectionMask() = default;
    InjectionMask(std::size_t rows, std::size_t cols, InjectionKind kind);
    /// From a dense 0/1 array; self masks must be square and symmetric.
    InjectionMask(std::size_t rows, std::size_t cols, InjectionKind kind,
                  std::span<const std::uint8_t> dense);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    InjectionKind kind() const { return kind_; }

    bool get(std::size_t i, std::size_t j) const {
        const std::size_t b = i * cols_ + j;
        return (words_[b >> 6] >> (b & 63)) & 1u;
    }
    void set(std::size_t i, std::size_t j, bool v);

    std::size_t popcount() const;
    bool is_symmetric() const;
    std::vector<std::uint8_t> to_dense() const;

    friend bool operator==(const InjectionMask&, const InjectionMask&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    InjectionKind kind_ = InjectionKind::kCross;
    std::vector<std::uint64_t> words_;
};

/// Query/key projections for one attention head, row-major.
struct AttentionLogits {
    std::size_t q = 0;  // query rows
    std::size_t k = 0;  // key rows
    std::size_t d = 0;  // head dimension
    std::vector<double> query;  // q x d
    std::vector<double> key;    // k x d
};

/// Row-stochastic q x k matrix.
struct AttentionWeights {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

InjectionMask build_cross_injection(std::span<const std::uint8_t> foreground,
                                    const TokenIndexSet& tokens, std::size_t key_length);
InjectionMask build_self_injection(std::span<const std::uint8_t> foreground);

/// softmax((Q K^T + alpha_inject * bias) / sqrt(d)) per row.
AttentionWeights inject_attention(const AttentionLogits& logits, const InjectionMask& bias,
                                  double alpha_inject);
/// Plain softmax(Q K^T / sqrt(d)).
AttentionWeights vanilla_attention(const AttentionLogits& logits);

struct GridSize {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t count() const { return height * width; }
    friend bool operator==(const GridSize&, const GridSize&) = default;
};

/// Parses "64x64,32x32" (a bare "N" means N x N).
std::vector<GridSize> parse_grid_list(std::string_view text);

/// Cross/self biases for one attention resolution.
struct InjectionPair {
    GridSize grid;
    BinaryMask foreground;  // the mask at this resolution, row-major
    InjectionMask cross;
    InjectionMask self;
};

/// Binarises at tau_bin, resamples (nearest) to every grid and builds both biases.
std::vector<InjectionPair> prepare_injection_set(const SoftMask& coarse, float tau_bin,
                                                 const TokenIndexSet& tokens,
                                                 std::size_t key_length,
                                                 std::span<const GridSize> resolutions);

/// CLIP text-encoder context length.
inline constexpr std::size_t kTextContextLength = 77;

std::string make_prompt(std::string_view class_name);

/// Lower-cased word/punctuation split. Index 0 of the embedding is the start token,
/// so word w sits at position w + 1.
std::vector<std::string> tokenize_prompt(std::string_view text);

/// Embedding positions of every occurrence of the class name's token sequence.
TokenIndexSet class_token_indices(std::string_view prompt, std::string_view class_name,
                                  std::size_t key_length = kTextContextLength);

}  // namespace segrefine
