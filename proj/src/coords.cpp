#include "th2/coords.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "th2/errors.hpp"

namespace th2 {

bool BBox::valid() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    return in01(x1) && in01(y1) && in01(x2) && in01(y2) && x1 <= x2 && y1 <= y2;
}

void BBox::validate() const {
    if (!valid()) throw ValidationError("box corners out of order or outside [0, 1]");
}

void CoordVocab::validate() const {
    if (bins < 2) throw ConfigError("coordinate vocabulary needs at least 2 bins");
}

std::size_t quantize_coord(double x, std::size_t bins) {
    if (!(x >= 0.0 && x <= 1.0)) throw InputError("coordinate outside [0, 1]");
    return static_cast<std::size_t>(std::lround(x * static_cast<double>(bins - 1)));
}

double dequantize_coord(std::size_t bin, std::size_t bins) {
    return static_cast<double>(bin) / static_cast<double>(bins - 1);
}

std::vector<TokenId> encode_box(const BBox& box, const CoordVocab& vocab) {
    vocab.validate();
    box.validate();
    auto c = [&](double v) { return vocab.coord(quantize_coord(v, vocab.bins)); };
    return {vocab.open(), c(box.x1), c(box.y1), vocab.comma(), c(box.x2), c(box.y2), vocab.close()};
}

BBox decode_box(std::span<const TokenId> tokens, const CoordVocab& vocab) {
    vocab.validate();
    double values[4] = {};
    std::size_t next_value = 0;
    for (std::size_t i = 0; i < kBoxTokens; ++i) {
        if (i >= tokens.size()) throw ParseError("box sequence ended early", i);
        const TokenId id = tokens[i];
        switch (i) {
            case 0:
                if (id != vocab.open()) throw ParseError("expected open mark", i);
                break;
            case 3:
                if (id != vocab.comma()) throw ParseError("expected comma", i);
                break;
            case 6:
                if (id != vocab.close()) throw ParseError("expected close mark", i);
                break;
            default:
                if (!vocab.is_coord(id)) throw ParseError("expected coordinate token", i);
                values[next_value++] = dequantize_coord(vocab.bin_of(id), vocab.bins);
        }
    }
    if (tokens.size() > kBoxTokens) throw ParseError("trailing tokens after close mark", kBoxTokens);
    BBox box{values[0], values[1], values[2], values[3]};
    if (box.x1 > box.x2 || box.y1 > box.y2) throw ValidationError("decoded box has inverted corners");
    return box;
}

std::string format_coord_digits(double x) {
    if (!(x >= 0.0 && x <= 1.0)) throw InputError("coordinate outside [0, 1]");
    // quantize on the 1000-bin grid, then render with three decimals
    const double snapped = dequantize_coord(quantize_coord(x, 1000), 1000);
    const long milli = std::min(std::lround(snapped * 1000.0), 999L);
    char buf[24];
    std::snprintf(buf, sizeof buf, "0.%03ld", milli);
    return buf;
}

std::vector<std::string> encode_box_digits(const BBox& box) {
    box.validate();
    std::vector<std::string> out;
    out.reserve(kDigitBoxTokens);
    out.emplace_back(kBoxOpenMark);
    const double values[4] = {box.x1, box.y1, box.x2, box.y2};
    for (int i = 0; i < 4; ++i) {
        if (i) out.emplace_back(",");
        for (char ch : format_coord_digits(values[i])) out.emplace_back(1, ch);
    }
    out.emplace_back(kBoxCloseMark);
    return out;
}

DetectionHead DetectionHead::init(std::size_t hidden_width, std::size_t mlp_width, Rng& rng) {
    return {nn::Linear::init(hidden_width, mlp_width, rng), nn::Linear::init(mlp_width, mlp_width, rng),
            nn::Linear::init(mlp_width, 4, rng)};
}

Tensor DetectionHead::predict(const Tensor& hidden) const { return proj(gelu(fc2(gelu(fc1(hidden))))); }

void DetectionHead::collect(std::vector<Tensor>& out) const {
    fc1.collect(out);
    fc2.collect(out);
    proj.collect(out);
}

Tensor detection_head_loss(const Tensor& hidden, const Tensor& targets, const DetectionHead& head) {
    if (hidden.rank() != 2 || hidden.dim(0) == 0) throw ContractError("detection loss needs at least one hidden state");
    if (targets.shape() != Shape{hidden.dim(0), 4}) {
        throw DimensionError("targets must be [" + std::to_string(hidden.dim(0)) + ",4], got " + shape_str(targets.shape()));
    }
    return mean(abs(sub(head.predict(hidden), targets)));
}

}  // namespace th2
