#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "th2/crop.hpp"
#include "th2/image.hpp"
#include "th2/nn.hpp"
#include "th2/spe.hpp"
#include "th2/tensor.hpp"

namespace th2 {

// ---- toy visual encoder -----------------------------------------------------

struct EncoderConfig {
    std::size_t tile_px = 224;
    std::size_t patch = 14;
    std::size_t channels = 3;
    std::size_t width = 16;
    std::size_t depth = 27;
    std::size_t n_heads = 2;
    std::size_t mlp_hidden = 32;
    // 0-based block indices whose outputs are kept for cross-attention.
    std::vector<std::size_t> recorded_layers{14, 18, 22, 26};

    std::size_t grid() const { return tile_px / patch; }
    std::size_t patches_per_tile() const { return grid() * grid(); }
    void validate() const;
};

struct TileFeatures {
    std::vector<Tensor> levels;  // one [g, g, width] map per recorded layer
    Tensor last;                 // final block output, [g, g, width]
};

struct VitFeatures {
    std::vector<std::size_t> recorded_layers;
    std::vector<TileFeatures> tiles;

    bool records(std::size_t layer) const;
    // ConfigError when the layer was not recorded.
    const Tensor& level(std::size_t tile, std::size_t layer) const;
};

// [g*g, patch*patch*channels], patches row-major, pixels HWC inside a patch.
Tensor patchify(const Image& tile, std::size_t patch);

class ToyVit {
   public:
    static ToyVit init(const EncoderConfig& cfg, Rng& rng);

    TileFeatures encode_tile(const Image& tile) const;
    VitFeatures encode(std::span<const Image> tiles) const;

    const EncoderConfig& config() const { return cfg_; }
    void collect(std::vector<Tensor>& out) const;

   private:
    struct Block {
        nn::LayerNorm ln_attn;
        nn::MultiHeadAttention attn;
        nn::LayerNorm ln_mlp;
        nn::Mlp mlp;
    };
    EncoderConfig cfg_;
    nn::Linear patch_embed_;
    Tensor pos_embed_;
    std::vector<Block> blocks_;
};

// ---- resampler ----------------------------------------------------------------

/// Which encoder layer each decoder layer cross-attends to.
struct RoutingTable {
    std::vector<std::size_t> encoder_layer;

    // Deep-to-shallow over the 14/18/22/26 taps.
    static RoutingTable deep_to_shallow() { return {{26, 22, 18, 14}}; }
    void validate(std::size_t decoder_layers) const;
    void validate(std::size_t decoder_layers, const VitFeatures& feats) const;
};

struct ResamplerConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 4;
    std::size_t qpn_hidden = 64;
    std::size_t mlp_hidden = 128;
    std::size_t d_out = 64;
    // Composite subsampling window in patch units: 2x2 pooling then 1x4 grouping.
    std::size_t window_rows = 2;
    std::size_t window_cols = 8;

    static constexpr std::size_t kPool = 2;
    static constexpr std::size_t kGroup = 4;

    std::size_t compression() const { return window_rows * window_cols; }
    void validate() const;
};

struct QpnParams {
    nn::Mlp mlp;       // pointwise, encoder width -> d_model
    nn::Linear dense;  // after pooling, d_model -> d_model

    static QpnParams init(std::size_t encoder_width, const ResamplerConfig& cfg, Rng& rng);
    void collect(std::vector<Tensor>& out) const;
};

/// Query proposal: pointwise MLP, 2x2 max pool, dense. [h, w, D] -> [h/2, w/2, d_model].
Tensor qpn_queries(const Tensor& features, const QpnParams& qpn);

struct DecoderLayer {
    nn::LayerNorm ln_self;
    nn::MultiHeadAttention self_attn;
    nn::LayerNorm ln_cross;
    nn::LayerNorm ln_memory;
    nn::MultiHeadAttention cross_attn;
    nn::LayerNorm ln_mlp;
    nn::Mlp mlp;
};

struct DecoderParams {
    std::vector<DecoderLayer> layers;

    static DecoderParams init(std::size_t encoder_width, const ResamplerConfig& cfg, Rng& rng);
    // Zeroes every projection that writes into the residual stream.
    void zero_output_projections();
    void collect(std::vector<Tensor>& out) const;
};

struct DecoderTrace {
    std::vector<nn::AttentionTrace> self_attention;   // per layer
    std::vector<nn::AttentionTrace> cross_attention;  // per layer, per group
};

/// Query arrangement of one image: a rows x cols sub-image grid, each tile
/// contributing a grid x grid block of queries in tile-major order, followed
/// by the thumbnail block when present.
struct QueryLayout {
    std::size_t rows = 1;
    std::size_t cols = 1;
    bool thumbnail = false;
    std::size_t grid = 8;

    std::size_t per_tile() const { return grid * grid; }
    std::size_t tile_count() const { return rows * cols + (thumbnail ? 1 : 0); }
    std::size_t query_count() const { return per_tile() * tile_count(); }
};

// SPE embedding for each query: sub-image queries sit on the whole-image
// (grid*rows) x (grid*cols) lattice; thumbnail queries on their own grid x grid.
Tensor query_positions(const SpeTable& spe, const QueryLayout& layout);
// Memory group (tile index) of each query; the thumbnail is the last group.
std::vector<std::size_t> query_groups(const QueryLayout& layout);

/// Pre-norm decoder over all queries. Per layer: bidirectional self-attention
/// across every query, cross-attention from each query to its own tile's
/// features at encoder layer routing[l], then an MLP, each with a residual.
/// Positional embeddings enter the attention queries/keys, not the residual.
Tensor decoder_forward(const Tensor& queries, const Tensor& positions, std::span<const std::size_t> groups,
                       const VitFeatures& feats, const RoutingTable& routing, const DecoderParams& params,
                       DecoderTrace* trace = nullptr);

Tensor decoder_forward(const Tensor& queries, const QueryLayout& layout, const VitFeatures& feats,
                       const RoutingTable& routing, const SpeTable& spe, const DecoderParams& params,
                       DecoderTrace* trace = nullptr);

/// perm[tile-major index] = whole-image row-major position on the
/// (grid*rows) x (grid*cols) query lattice.
std::vector<std::size_t> rearrange_permutation(std::size_t rows, std::size_t cols, std::size_t grid = 8);
// Inverse of the above: out[k] = tile-major index that lands at position k.
std::vector<std::size_t> rearrange_order(std::size_t rows, std::size_t cols, std::size_t grid = 8);

// Concatenates consecutive runs of `group` rows channel-wise: [N, d] -> [N/group, group*d].
Tensor group_concat(const Tensor& tokens, std::size_t group = ResamplerConfig::kGroup);
// Also rejects windows that would straddle a lattice row of row_width tokens.
Tensor group_concat(const Tensor& tokens, std::size_t row_width, std::size_t group);

// ---- end-to-end ------------------------------------------------------------------

struct FrontendConfig {
    EncoderConfig encoder;
    ResamplerConfig resampler;
    RoutingTable routing = RoutingTable::deep_to_shallow();

    void validate() const;
};

struct FrontendOutput {
    Tensor tokens;  // [16 * tiles, d_out]
    CropPlan plan;
    std::size_t patch_tokens = 0;
    std::size_t query_count = 0;
};

/// Randomly initialized encoder + resampler. Parameters are shared handles,
/// so copies of a Frontend alias the same weights.
class Frontend {
   public:
    static Frontend init(const FrontendConfig& cfg, std::uint64_t seed);

    FrontendOutput compress(const Image& img, const CropConfig& crop) const;

    const FrontendConfig& config() const { return cfg_; }
    const ToyVit& encoder() const { return encoder_; }
    const QpnParams& qpn() const { return qpn_; }
    DecoderParams& decoder() { return decoder_; }
    const DecoderParams& decoder() const { return decoder_; }
    const SpeTable& spe() const { return spe_; }
    const nn::Linear& out_proj() const { return out_proj_; }

    // Every trainable tensor, encoder first.
    std::vector<Tensor> parameters() const;
    std::vector<Tensor> resampler_parameters() const;

   private:
    FrontendConfig cfg_;
    ToyVit encoder_;
    QpnParams qpn_;
    DecoderParams decoder_;
    SpeTable spe_;
    nn::Linear out_proj_;
};

FrontendOutput frontend_compress(const Image& img, const CropConfig& crop, const Frontend& model);

// Output tokens the frontend emits for a plan, without running it.
std::size_t frontend_token_count(const CropPlan& plan, const FrontendConfig& cfg = {});

}  // namespace th2
