#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "th2/nn.hpp"
#include "th2/tensor.hpp"

namespace th2 {

/// Normalized box corners, 0 <= x1 <= x2 <= 1 and likewise for y.
struct BBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool valid() const;
    void validate() const;  // ValidationError
    bool operator==(const BBox&) const = default;
};

using TokenId = std::uint32_t;

/// Vocabulary slice for boxes: open mark, close mark, comma, then one token
/// per quantization bin, all offset by `base`.
struct CoordVocab {
    std::size_t bins = 1000;
    TokenId base = 0;

    TokenId open() const { return base; }
    TokenId close() const { return base + 1; }
    TokenId comma() const { return base + 2; }
    TokenId coord(std::size_t bin) const { return base + 3 + static_cast<TokenId>(bin); }
    std::size_t size() const { return 3 + bins; }

    bool is_coord(TokenId id) const { return id >= coord(0) && id < coord(bins); }
    std::size_t bin_of(TokenId id) const { return id - coord(0); }

    void validate() const;
};

inline constexpr std::size_t kBoxTokens = 7;
inline constexpr std::size_t kDigitBoxTokens = 25;

// round(x * (bins - 1)) and back
std::size_t quantize_coord(double x, std::size_t bins);
double dequantize_coord(std::size_t bin, std::size_t bins);

// [open, x1, y1, comma, x2, y2, close]
std::vector<TokenId> encode_box(const BBox& box, const CoordVocab& vocab = {});
// ParseError at the first offending index; ValidationError for inverted corners.
BBox decode_box(std::span<const TokenId> tokens, const CoordVocab& vocab = {});

// Digit-string baseline: one token per character of "0.ddd", marks and
// commas, 25 tokens per box. 1.0 renders as "0.999".
inline constexpr const char* kBoxOpenMark = "<box>";
inline constexpr const char* kBoxCloseMark = "</box>";
std::vector<std::string> encode_box_digits(const BBox& box);
std::string format_coord_digits(double x);

/// Auxiliary box regressor reading language-model hidden states:
/// two gelu layers, then a linear map to the 4 coordinates.
struct DetectionHead {
    nn::Linear fc1, fc2, proj;

    static DetectionHead init(std::size_t hidden_width, std::size_t mlp_width, Rng& rng);
    Tensor predict(const Tensor& hidden) const;  // [n, dh] -> [n, 4]
    void collect(std::vector<Tensor>& out) const;
};

// Mean absolute error over all n*4 coordinates.
Tensor detection_head_loss(const Tensor& hidden, const Tensor& targets, const DetectionHead& head);

}  // namespace th2
