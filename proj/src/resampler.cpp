#include "th2/resampler.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "th2/errors.hpp"

namespace th2 {

// ---- encoder ------------------------------------------------------------------

void EncoderConfig::validate() const {
    if (patch == 0 || tile_px == 0 || tile_px % patch) throw ConfigError("tile size must be a multiple of the patch size");
    if (width < 2 || n_heads == 0 || width % n_heads) throw ConfigError("encoder width must split evenly across heads");
    if (depth == 0) throw ConfigError("encoder depth must be positive");
    for (std::size_t i = 0; i < recorded_layers.size(); ++i) {
        if (recorded_layers[i] >= depth) {
            throw ConfigError("recorded layer " + std::to_string(recorded_layers[i]) + " beyond encoder depth " +
                              std::to_string(depth));
        }
        if (i && recorded_layers[i] <= recorded_layers[i - 1]) throw ConfigError("recorded layers must be ascending");
    }
}

bool VitFeatures::records(std::size_t layer) const {
    return std::find(recorded_layers.begin(), recorded_layers.end(), layer) != recorded_layers.end();
}

const Tensor& VitFeatures::level(std::size_t tile, std::size_t layer) const {
    const auto it = std::find(recorded_layers.begin(), recorded_layers.end(), layer);
    if (it == recorded_layers.end()) throw ConfigError("encoder layer " + std::to_string(layer) + " was not recorded");
    if (tile >= tiles.size()) throw ContractError("tile " + std::to_string(tile) + " has no features");
    return tiles[tile].levels[static_cast<std::size_t>(it - recorded_layers.begin())];
}

Tensor patchify(const Image& tile, std::size_t patch) {
    if (tile.empty() || patch == 0 || tile.width % patch || tile.height % patch) {
        throw DimensionError("tile " + std::to_string(tile.width) + "x" + std::to_string(tile.height) +
                             " is not a whole number of " + std::to_string(patch) + "px patches");
    }
    const std::size_t gw = tile.width / patch, gh = tile.height / patch, c = tile.channels;
    const std::size_t row = patch * patch * c;
    std::vector<double> out(gw * gh * row);
    for (std::size_t py = 0; py < gh; ++py)
        for (std::size_t px = 0; px < gw; ++px) {
            double* dst = &out[(py * gw + px) * row];
            for (std::size_t y = 0; y < patch; ++y)
                for (std::size_t x = 0; x < patch; ++x)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        dst[(y * patch + x) * c + ch] = tile.at(px * patch + x, py * patch + y, ch);
        }
    return Tensor({gw * gh, row}, std::move(out));
}

ToyVit ToyVit::init(const EncoderConfig& cfg, Rng& rng) {
    cfg.validate();
    ToyVit vit;
    vit.cfg_ = cfg;
    vit.patch_embed_ = nn::Linear::init(cfg.patch * cfg.patch * cfg.channels, cfg.width, rng);
    std::vector<double> pos(cfg.patches_per_tile() * cfg.width);
    for (double& x : pos) x = 0.02 * rng.normal();
    vit.pos_embed_ = Tensor({cfg.patches_per_tile(), cfg.width}, std::move(pos));
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        vit.blocks_.push_back({nn::LayerNorm::init(cfg.width),
                               nn::MultiHeadAttention::init(cfg.width, cfg.width, cfg.width, cfg.n_heads, rng),
                               nn::LayerNorm::init(cfg.width), nn::Mlp::init(cfg.width, cfg.mlp_hidden, cfg.width, rng)});
    }
    return vit;
}

TileFeatures ToyVit::encode_tile(const Image& tile) const {
    if (tile.width != cfg_.tile_px || tile.height != cfg_.tile_px || tile.channels != cfg_.channels) {
        throw DimensionError("encoder expects " + std::to_string(cfg_.tile_px) + "px tiles with " +
                             std::to_string(cfg_.channels) + " channels");
    }
    const Shape map_shape{cfg_.grid(), cfg_.grid(), cfg_.width};
    TileFeatures out;
    Tensor x = add(patch_embed_(patchify(tile, cfg_.patch)), pos_embed_);
    std::size_t next = 0;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& b = blocks_[i];
        const Tensor h = b.ln_attn(x);
        x = add(x, b.attn(h, h, h));
        x = add(x, b.mlp(b.ln_mlp(x)));
        if (next < cfg_.recorded_layers.size() && cfg_.recorded_layers[next] == i) {
            out.levels.push_back(reshape(x, map_shape));
            ++next;
        }
    }
    out.last = reshape(x, map_shape);
    return out;
}

VitFeatures ToyVit::encode(std::span<const Image> tiles) const {
    VitFeatures feats;
    feats.recorded_layers = cfg_.recorded_layers;
    feats.tiles.reserve(tiles.size());
    for (const Image& t : tiles) feats.tiles.push_back(encode_tile(t));
    return feats;
}

void ToyVit::collect(std::vector<Tensor>& out) const {
    patch_embed_.collect(out);
    out.push_back(pos_embed_);
    for (const Block& b : blocks_) {
        b.ln_attn.collect(out);
        b.attn.collect(out);
        b.ln_mlp.collect(out);
        b.mlp.collect(out);
    }
}

// ---- configuration -------------------------------------------------------------

void RoutingTable::validate(std::size_t decoder_layers) const {
    if (encoder_layer.size() != decoder_layers) {
        throw ConfigError("routing table has " + std::to_string(encoder_layer.size()) + " entries for " +
                          std::to_string(decoder_layers) + " decoder layers");
    }
    for (std::size_t i = 1; i < encoder_layer.size(); ++i) {
        if (encoder_layer[i] > encoder_layer[i - 1]) throw ConfigError("routing must run deep to shallow");
    }
}

void RoutingTable::validate(std::size_t decoder_layers, const VitFeatures& feats) const {
    validate(decoder_layers);
    for (std::size_t layer : encoder_layer) {
        if (!feats.records(layer)) {
            throw ConfigError("routing references unrecorded encoder layer " + std::to_string(layer));
        }
    }
}

void ResamplerConfig::validate() const {
    if (d_model < 2 || n_heads == 0 || d_model % n_heads) throw ConfigError("d_model must split evenly across heads");
    if (n_layers == 0) throw ConfigError("decoder needs at least one layer");
    if (window_rows != kPool || window_cols != kPool * kGroup) {
        throw ConfigError("subsampling window must be " + std::to_string(kPool) + "x" + std::to_string(kPool * kGroup));
    }
    if (d_out == 0 || qpn_hidden == 0 || mlp_hidden == 0) throw ConfigError("layer widths must be positive");
}

void FrontendConfig::validate() const {
    encoder.validate();
    resampler.validate();
    routing.validate(resampler.n_layers);
    for (std::size_t layer : routing.encoder_layer) {
        if (std::find(encoder.recorded_layers.begin(), encoder.recorded_layers.end(), layer) ==
            encoder.recorded_layers.end()) {
            throw ConfigError("routing references unrecorded encoder layer " + std::to_string(layer));
        }
    }
    const std::size_t g = encoder.grid();
    if (g % ResamplerConfig::kPool || (g / ResamplerConfig::kPool) % ResamplerConfig::kGroup) {
        throw ConfigError("patch grid " + std::to_string(g) + " incompatible with the 2x8 window");
    }
}

// ---- QPN --------------------------------------------------------------------------

QpnParams QpnParams::init(std::size_t encoder_width, const ResamplerConfig& cfg, Rng& rng) {
    return {nn::Mlp::init(encoder_width, cfg.qpn_hidden, cfg.d_model, rng), nn::Linear::init(cfg.d_model, cfg.d_model, rng)};
}

void QpnParams::collect(std::vector<Tensor>& out) const {
    mlp.collect(out);
    dense.collect(out);
}

Tensor qpn_queries(const Tensor& features, const QpnParams& qpn) {
    if (features.rank() != 3) throw DimensionError("QPN expects [h,w,D] features, got " + shape_str(features.shape()));
    const std::size_t h = features.dim(0), w = features.dim(1), d = features.dim(2);
    if (h % 2 || w % 2) throw DimensionError("QPN needs even spatial extents, got " + shape_str(features.shape()));
    const Tensor pointwise = qpn.mlp(reshape(features, {h * w, d}));
    const std::size_t width = pointwise.dim(1);
    const Tensor pooled = max_pool_2x2(reshape(pointwise, {h, w, width}));
    const Tensor dense = qpn.dense(reshape(pooled, {(h / 2) * (w / 2), width}));
    return reshape(dense, {h / 2, w / 2, dense.dim(1)});
}

// ---- decoder ----------------------------------------------------------------------

DecoderParams DecoderParams::init(std::size_t encoder_width, const ResamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    DecoderParams p;
    const std::size_t d = cfg.d_model;
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        p.layers.push_back({nn::LayerNorm::init(d), nn::MultiHeadAttention::init(d, d, d, cfg.n_heads, rng),
                            nn::LayerNorm::init(d), nn::LayerNorm::init(encoder_width),
                            nn::MultiHeadAttention::init(d, encoder_width, d, cfg.n_heads, rng), nn::LayerNorm::init(d),
                            nn::Mlp::init(d, cfg.mlp_hidden, d, rng)});
    }
    return p;
}

void DecoderParams::zero_output_projections() {
    for (DecoderLayer& l : layers) {
        l.self_attn.o.zero();
        l.cross_attn.o.zero();
        l.mlp.down.zero();
    }
}

void DecoderParams::collect(std::vector<Tensor>& out) const {
    for (const DecoderLayer& l : layers) {
        l.ln_self.collect(out);
        l.self_attn.collect(out);
        l.ln_cross.collect(out);
        l.ln_memory.collect(out);
        l.cross_attn.collect(out);
        l.ln_mlp.collect(out);
        l.mlp.collect(out);
    }
}

Tensor query_positions(const SpeTable& spe, const QueryLayout& layout) {
    const std::size_t g = layout.grid;
    const Tensor lattice = spe_grid(spe, g * layout.rows, g * layout.cols);
    const auto perm = rearrange_permutation(layout.rows, layout.cols, g);
    // perm maps tile-major -> lattice position, exactly the gather we need
    Tensor sub = gather_rows(lattice, perm);
    if (!layout.thumbnail) return sub;
    const Tensor parts[] = {sub, spe_grid(spe, g, g)};
    return concat(parts, 0);
}

std::vector<std::size_t> query_groups(const QueryLayout& layout) {
    std::vector<std::size_t> groups(layout.query_count());
    for (std::size_t i = 0; i < groups.size(); ++i) groups[i] = i / layout.per_tile();
    return groups;
}

namespace {

// Each query attends only to the memory of its own group.
Tensor grouped_cross_attention(const DecoderLayer& layer, const Tensor& query_in, std::span<const std::size_t> groups,
                               const VitFeatures& feats, std::size_t encoder_layer, nn::AttentionTrace* trace) {
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
    std::vector<Tensor> outputs;
    std::vector<std::size_t> stacked_order;
    stacked_order.reserve(groups.size());
    for (const auto& [group, idx] : members) {
        const Tensor& map = feats.level(group, encoder_layer);
        const Tensor memory = layer.ln_memory(reshape(map, {map.dim(0) * map.dim(1), map.dim(2)}));
        outputs.push_back(layer.cross_attn(gather_rows(query_in, idx), memory, memory, trace));
        stacked_order.insert(stacked_order.end(), idx.begin(), idx.end());
    }
    const Tensor stacked = outputs.size() == 1 ? outputs[0] : concat(outputs, 0);
    std::vector<std::size_t> restore(groups.size());
    for (std::size_t k = 0; k < stacked_order.size(); ++k) restore[stacked_order[k]] = k;
    return gather_rows(stacked, restore);
}

}  // namespace

Tensor decoder_forward(const Tensor& queries, const Tensor& positions, std::span<const std::size_t> groups,
                       const VitFeatures& feats, const RoutingTable& routing, const DecoderParams& params,
                       DecoderTrace* trace) {
    routing.validate(params.layers.size(), feats);
    if (queries.rank() != 2 || positions.shape() != queries.shape()) {
        throw DimensionError("queries " + shape_str(queries.shape()) + " vs positions " + shape_str(positions.shape()));
    }
    if (groups.size() != queries.dim(0)) throw DimensionError("one memory group per query required");
    for (std::size_t g : groups) {
        if (g >= feats.tiles.size()) throw ContractError("query group " + std::to_string(g) + " has no features");
    }
    Tensor x = queries;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DecoderLayer& layer = params.layers[l];
        nn::AttentionTrace* self_trace = nullptr;
        nn::AttentionTrace* cross_trace = nullptr;
        if (trace) {
            self_trace = &trace->self_attention.emplace_back();
            cross_trace = &trace->cross_attention.emplace_back();
        }
        const Tensor h = layer.ln_self(x);
        const Tensor qk = add(h, positions);
        x = add(x, layer.self_attn(qk, qk, h, self_trace));

        const Tensor q = add(layer.ln_cross(x), positions);
        x = add(x, grouped_cross_attention(layer, q, groups, feats, routing.encoder_layer[l], cross_trace));

        x = add(x, layer.mlp(layer.ln_mlp(x)));
    }
    return x;
}

Tensor decoder_forward(const Tensor& queries, const QueryLayout& layout, const VitFeatures& feats,
                       const RoutingTable& routing, const SpeTable& spe, const DecoderParams& params,
                       DecoderTrace* trace) {
    if (queries.rank() != 2 || queries.dim(0) != layout.query_count()) {
        throw DimensionError("expected " + std::to_string(layout.query_count()) + " queries, got " +
                             shape_str(queries.shape()));
    }
    const auto groups = query_groups(layout);
    return decoder_forward(queries, query_positions(spe, layout), groups, feats, routing, params, trace);
}

// ---- rearrangement ----------------------------------------------------------------

std::vector<std::size_t> rearrange_permutation(std::size_t rows, std::size_t cols, std::size_t grid) {
    if (rows == 0 || cols == 0 || grid == 0) throw InputError("rearrangement needs a non-empty grid");
    const std::size_t per_tile = grid * grid;
    const std::size_t row_width = grid * cols;
    std::vector<std::size_t> perm(per_tile * rows * cols);
    for (std::size_t a = 0; a < rows; ++a)
        for (std::size_t b = 0; b < cols; ++b)
            for (std::size_t y = 0; y < grid; ++y)
                for (std::size_t x = 0; x < grid; ++x) {
                    const std::size_t src = (a * cols + b) * per_tile + y * grid + x;
                    perm[src] = (grid * a + y) * row_width + (grid * b + x);
                }
    return perm;
}

std::vector<std::size_t> rearrange_order(std::size_t rows, std::size_t cols, std::size_t grid) {
    const auto perm = rearrange_permutation(rows, cols, grid);
    std::vector<std::size_t> order(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) order[perm[i]] = i;
    return order;
}

Tensor group_concat(const Tensor& tokens, std::size_t group) {
    if (tokens.rank() != 2) throw DimensionError("group_concat expects [N, d], got " + shape_str(tokens.shape()));
    if (group == 0 || tokens.dim(0) % group) {
        throw DimensionError(std::to_string(tokens.dim(0)) + " tokens do not divide into groups of " + std::to_string(group));
    }
    // row-major storage makes consecutive rows already channel-adjacent
    return reshape(tokens, {tokens.dim(0) / group, group * tokens.dim(1)});
}

Tensor group_concat(const Tensor& tokens, std::size_t row_width, std::size_t group) {
    if (group == 0 || row_width % group) {
        throw DimensionError("lattice row of " + std::to_string(row_width) + " tokens would split a group of " +
                             std::to_string(group));
    }
    if (tokens.rank() == 2 && tokens.dim(0) % row_width) throw DimensionError("token count is not whole lattice rows");
    return group_concat(tokens, group);
}

// ---- frontend ---------------------------------------------------------------------

Frontend Frontend::init(const FrontendConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng root(seed);
    Rng enc_rng = root.split(1), qpn_rng = root.split(2), dec_rng = root.split(3), out_rng = root.split(4);
    Frontend f;
    f.cfg_ = cfg;
    f.encoder_ = ToyVit::init(cfg.encoder, enc_rng);
    f.qpn_ = QpnParams::init(cfg.encoder.width, cfg.resampler, qpn_rng);
    f.decoder_ = DecoderParams::init(cfg.encoder.width, cfg.resampler, dec_rng);
    f.spe_ = SpeTable::random(cfg.resampler.d_model, cfg.resampler.n_heads, root.split(5).next_u64());
    f.out_proj_ = nn::Linear::init(ResamplerConfig::kGroup * cfg.resampler.d_model, cfg.resampler.d_out, out_rng);
    return f;
}

std::vector<Tensor> Frontend::parameters() const {
    std::vector<Tensor> out;
    encoder_.collect(out);
    auto rest = resampler_parameters();
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

std::vector<Tensor> Frontend::resampler_parameters() const {
    std::vector<Tensor> out;
    qpn_.collect(out);
    decoder_.collect(out);
    out_proj_.collect(out);
    return out;
}

FrontendOutput Frontend::compress(const Image& img, const CropConfig& crop) const {
    if (crop.tile_px != cfg_.encoder.tile_px) throw ConfigError("crop tile size differs from encoder tile size");
    FrontendOutput result;
    result.plan = plan_crop(img.width, img.height, crop);
    TiledImage tiled = tile_image(img, result.plan, crop);
    std::vector<Image> inputs = std::move(tiled.tiles);
    if (tiled.thumbnail) inputs.push_back(std::move(*tiled.thumbnail));
    result.patch_tokens = inputs.size() * cfg_.encoder.patches_per_tile();

    const VitFeatures feats = encoder_.encode(inputs);
    std::vector<Tensor> per_tile;
    per_tile.reserve(inputs.size());
    for (const TileFeatures& tf : feats.tiles) {
        const Tensor q = qpn_queries(tf.last, qpn_);
        per_tile.push_back(reshape(q, {q.dim(0) * q.dim(1), q.dim(2)}));
    }
    const Tensor queries = per_tile.size() == 1 ? per_tile[0] : concat(per_tile, 0);
    result.query_count = queries.dim(0);

    const QueryLayout layout{result.plan.rows, result.plan.cols, result.plan.has_thumbnail,
                             cfg_.encoder.grid() / ResamplerConfig::kPool};
    const Tensor refined = decoder_forward(queries, layout, feats, cfg_.routing, spe_, decoder_);

    const std::size_t sub_count = layout.per_tile() * layout.rows * layout.cols;
    const auto order = rearrange_order(layout.rows, layout.cols, layout.grid);
    std::vector<Tensor> grouped;
    grouped.push_back(group_concat(gather_rows(slice(refined, 0, 0, sub_count), order), layout.grid * layout.cols,
                                   ResamplerConfig::kGroup));
    if (layout.thumbnail) {
        grouped.push_back(group_concat(slice(refined, 0, sub_count, refined.dim(0)), layout.grid, ResamplerConfig::kGroup));
    }
    result.tokens = out_proj_(grouped.size() == 1 ? grouped[0] : concat(grouped, 0));
    return result;
}

FrontendOutput frontend_compress(const Image& img, const CropConfig& crop, const Frontend& model) {
    return model.compress(img, crop);
}

std::size_t frontend_token_count(const CropPlan& plan, const FrontendConfig& cfg) {
    return plan.total_tiles() * cfg.encoder.patches_per_tile() / cfg.resampler.compression();
}

}  // namespace th2
