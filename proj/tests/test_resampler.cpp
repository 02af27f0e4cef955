#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "th2/errors.hpp"
#include "th2/resampler.hpp"

using namespace th2;

namespace {

// Random multi-level features for `tiles` tiles of a g x g patch grid.
VitFeatures random_features(std::size_t tiles, std::size_t g, std::size_t width, std::vector<std::size_t> layers,
                            Rng& rng) {
    VitFeatures f{layers, {}};
    for (std::size_t t = 0; t < tiles; ++t) {
        TileFeatures tf;
        for (std::size_t k = 0; k < layers.size(); ++k) tf.levels.push_back(oracle::random_tensor({g, g, width}, rng));
        tf.last = tf.levels.back();
        f.tiles.push_back(std::move(tf));
    }
    return f;
}

FrontendConfig small_frontend() {
    FrontendConfig c;
    c.encoder.width = 8;
    c.encoder.depth = 4;
    c.encoder.mlp_hidden = 16;
    c.encoder.recorded_layers = {0, 1, 2, 3};
    c.routing = {{3, 2, 1, 0}};
    c.resampler.d_model = 16;
    c.resampler.n_heads = 2;
    c.resampler.qpn_hidden = 16;
    c.resampler.mlp_hidden = 32;
    c.resampler.d_out = 8;
    return c;
}

Image noise(std::size_t w, std::size_t h, std::uint64_t seed) {
    Rng rng(seed);
    Image img(w, h, 3);
    for (double& p : img.pixels) p = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("query proposal") {
    Rng rng(1);
    ResamplerConfig cfg;
    const QpnParams qpn = QpnParams::init(16, cfg, rng);
    SUBCASE("one tile gives 64 queries") {
        const Tensor q = qpn_queries(oracle::random_tensor({16, 16, 16}, rng), qpn);
        CHECK(q.shape() == Shape{8, 8, cfg.d_model});
    }
    SUBCASE("constant features give identical queries") {
        const Tensor q = qpn_queries(Tensor::full({16, 16, 16}, 0.3), qpn);
        for (std::size_t i = 1; i < 64; ++i)
            for (std::size_t k = 0; k < cfg.d_model; ++k) CHECK(q.data()[i * cfg.d_model + k] == q.data()[k]);
    }
    SUBCASE("odd extent") {
        CHECK_THROWS_AS(qpn_queries(Tensor::zeros({15, 16, 16}), qpn), DimensionError);
    }
}

TEST_CASE("six tiles give 384 queries") {
    const FrontendConfig cfg = small_frontend();
    const Frontend model = Frontend::init(cfg, 3);
    CropConfig crop;
    crop.thumbnail = false;
    const auto out = model.compress(noise(672, 448, 4), crop);
    CHECK(out.plan.rows == 2);
    CHECK(out.plan.cols == 3);
    CHECK(out.query_count == 384);
    CHECK(out.tokens.dim(0) == 96);
}

TEST_CASE("decoder") {
    Rng rng(2);
    ResamplerConfig cfg;
    cfg.d_model = 32;
    cfg.n_heads = 4;
    cfg.mlp_hidden = 48;
    const std::vector<std::size_t> layers{1, 3, 5, 7};
    const RoutingTable routing{{7, 5, 3, 1}};
    const SpeTable spe = SpeTable::random(cfg.d_model, cfg.n_heads, 5);
    const QueryLayout layout{1, 2, true, 4};  // 3 groups of 16 queries
    const VitFeatures feats = random_features(3, 8, 8, layers, rng);
    DecoderParams params = DecoderParams::init(8, cfg, rng);
    const Tensor queries = oracle::random_tensor({layout.query_count(), cfg.d_model}, rng);

    SUBCASE("zero output projections make the decoder the identity") {
        params.zero_output_projections();
        const Tensor out = decoder_forward(queries, layout, feats, routing, spe, params);
        REQUIRE(out.shape() == queries.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == queries.data()[i]);
    }
    SUBCASE("attention rows are distributions at every layer") {
        DecoderTrace trace;
        decoder_forward(queries, layout, feats, routing, spe, params, &trace);
        REQUIRE(trace.self_attention.size() == 4);
        REQUIRE(trace.cross_attention.size() == 4);
        for (const auto* per_layer : {&trace.self_attention, &trace.cross_attention})
            for (const auto& tr : *per_layer)
                for (const Tensor& w : tr.weights) {
                    const std::size_t n = w.dim(1);
                    for (std::size_t r = 0; r < w.dim(0); ++r) {
                        double s = 0;
                        for (std::size_t j = 0; j < n; ++j) s += w.data()[r * n + j];
                        CHECK(std::fabs(s - 1.0) <= 1e-12);
                    }
                }
        // each cross-attention call sees one tile: 64 memory positions
        CHECK(trace.cross_attention[0].weights.front().dim(1) == 64);
    }
    SUBCASE("gradient with respect to 16 queries") {
        const QueryLayout one{1, 1, false, 4};
        const VitFeatures f1 = random_features(1, 8, 8, layers, rng);
        const Tensor q = oracle::random_tensor({16, 32}, rng);
        const Tensor w = oracle::random_tensor({16, 32}, rng);
        const auto g = oracle::check_gradients(
            [&] { return sum(mul(decoder_forward(q, one, f1, routing, spe, params), w)); }, {q}, 1e-3);
        INFO(g.worst);
        CHECK(g.passed);
    }
    SUBCASE("cross-attention reads only the query's own tile") {
        ResamplerConfig single = cfg;
        single.n_layers = 1;
        Rng r2(9);
        const DecoderParams p1 = DecoderParams::init(8, single, r2);
        const RoutingTable rt{{5}};
        VitFeatures changed = feats;
        changed.tiles[1].levels[2] = oracle::random_tensor({8, 8, 8}, rng);
        const Tensor a = decoder_forward(queries, layout, feats, rt, spe, p1);
        const Tensor b = decoder_forward(queries, layout, changed, rt, spe, p1);
        for (std::size_t i = 0; i < 16 * 32; ++i) CHECK(a.data()[i] == b.data()[i]);        // tile 0
        for (std::size_t i = 32 * 32; i < 48 * 32; ++i) CHECK(a.data()[i] == b.data()[i]);  // thumbnail
        double diff = 0;
        for (std::size_t i = 16 * 32; i < 32 * 32; ++i) diff += std::fabs(a.data()[i] - b.data()[i]);
        CHECK(diff > 0.0);
    }
    SUBCASE("routing errors") {
        CHECK_THROWS_AS(decoder_forward(queries, layout, feats, RoutingTable{{7, 5, 3, 2}}, spe, params), ConfigError);
        CHECK_THROWS_AS(decoder_forward(queries, layout, feats, RoutingTable{{7, 5, 3}}, spe, params), ConfigError);
        CHECK_THROWS_AS(decoder_forward(queries, layout, feats, RoutingTable{{1, 3, 5, 7}}, spe, params), ConfigError);
        CHECK_THROWS_AS(feats.level(0, 2), ConfigError);
    }
}

TEST_CASE("query positions and groups") {
    const SpeTable spe = SpeTable::random(16, 2, 8);
    const QueryLayout layout{2, 3, true, 8};
    const Tensor pos = query_positions(spe, layout);
    CHECK(pos.shape() == Shape{7 * 64, 16});
    const auto groups = query_groups(layout);
    CHECK(groups.front() == 0);
    CHECK(groups[64] == 1);
    CHECK(groups.back() == 6);
    // tile (1, 2), local (0, 0) sits at lattice (8, 16)
    const Tensor lattice = spe_grid(spe, 16, 24);
    const std::size_t k = (1 * 3 + 2) * 64;
    for (std::size_t c = 0; c < 16; ++c) CHECK(pos.data()[k * 16 + c] == lattice.data()[(8 * 24 + 16) * 16 + c]);
    // thumbnail block is its own 8x8 grid
    const Tensor thumb = spe_grid(spe, 8, 8);
    for (std::size_t c = 0; c < 64 * 16; ++c) CHECK(pos.data()[6 * 64 * 16 + c] == thumb.data()[c]);
}

TEST_CASE("rearrangement") {
    SUBCASE("single tile is the identity") {
        const auto p = rearrange_permutation(1, 1);
        REQUIRE(p.size() == 64);
        for (std::size_t i = 0; i < 64; ++i) CHECK(p[i] == i);
    }
    SUBCASE("side-by-side tiles interleave row by row") {
        const auto order = rearrange_order(1, 2);
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(order[i] == i);
            CHECK(order[8 + i] == 64 + i);
            CHECK(order[16 + i] == 8 + i);
        }
    }
    SUBCASE("3x4 grid matches the sorted lattice") {
        CHECK(rearrange_order(3, 4) == oracle::rearrange_order_bruteforce(3, 4, 8));
        const auto perm = rearrange_permutation(3, 4);
        // tile (a, b), local (y, x) -> (8a + y) * 32 + 8b + x
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = 0; b < 4; ++b)
                for (std::size_t y = 0; y < 8; ++y)
                    for (std::size_t x = 0; x < 8; ++x)
                        CHECK(perm[((a * 4 + b) * 8 + y) * 8 + x] == (8 * a + y) * 32 + 8 * b + x);
    }
    SUBCASE("empty grid") { CHECK_THROWS_AS(rearrange_permutation(0, 2), InputError); }
}

TEST_CASE("group concat") {
    Rng rng(4);
    SUBCASE("one tile of 64 tokens becomes 16") {
        const Tensor out = group_concat(oracle::random_tensor({64, 5}, rng));
        CHECK(out.shape() == Shape{16, 20});
    }
    SUBCASE("identical quadruple repeats along channels") {
        const Tensor t({4, 3}, {1, 2, 3, 1, 2, 3, 1, 2, 3, 1, 2, 3});
        const Tensor out = group_concat(t);
        CHECK(out.shape() == Shape{1, 12});
        for (std::size_t i = 0; i < 12; ++i) CHECK(out.data()[i] == double(i % 3 + 1));
    }
    SUBCASE("windows never straddle lattice rows") {
        const Tensor t = oracle::random_tensor({384, 2}, rng);
        const Tensor out = group_concat(t, 24, 4);
        CHECK(out.dim(0) == 96);
        // window w covers lattice row w / 6 only
        for (std::size_t w = 0; w < 96; ++w) CHECK((4 * w) / 24 == (4 * w + 3) / 24);
        CHECK_THROWS_AS(group_concat(t, 6, 4), DimensionError);
    }
    SUBCASE("count not divisible") { CHECK_THROWS_AS(group_concat(Tensor::zeros({6, 2})), DimensionError); }
}

TEST_CASE("encoder") {
    Rng rng(6);
    FrontendConfig cfg = small_frontend();
    const ToyVit vit = ToyVit::init(cfg.encoder, rng);
    const Image tile = noise(224, 224, 7);
    CHECK(patchify(tile, 14).shape() == Shape{256, 588});
    const auto tf = vit.encode_tile(tile);
    REQUIRE(tf.levels.size() == 4);
    for (const auto& l : tf.levels) CHECK(l.shape() == Shape{16, 16, 8});
    CHECK(tf.last.shape() == Shape{16, 16, 8});
    CHECK_THROWS_AS(vit.encode_tile(noise(100, 224, 1)), DimensionError);
    cfg.encoder.recorded_layers = {0, 4};
    CHECK_THROWS_AS(cfg.encoder.validate(), ConfigError);
}

TEST_CASE("frontend token counts") {
    const FrontendConfig cfg = small_frontend();
    const Frontend model = Frontend::init(cfg, 1);
    CropConfig crop;
    SUBCASE("896x672 with thumbnail gives 208 tokens") {
        const auto out = model.compress(noise(896, 672, 2), crop);
        CHECK(out.tokens.shape() == Shape{208, 8});
        CHECK(out.patch_tokens == 13 * 256);
        CHECK(frontend_token_count(out.plan, cfg) == 208);
    }
    SUBCASE("448x224 and 224x224 without thumbnail") {
        crop.thumbnail = false;
        CHECK(model.compress(noise(448, 224, 3), crop).tokens.dim(0) == 32);
        CHECK(model.compress(noise(224, 224, 4), crop).tokens.dim(0) == 16);
    }
    SUBCASE("deterministic in the seed") {
        const Image img = noise(300, 200, 5);
        const auto a = Frontend::init(cfg, 9).compress(img, crop).tokens;
        const auto b = Frontend::init(cfg, 9).compress(img, crop).tokens;
        const auto c = Frontend::init(cfg, 10).compress(img, crop).tokens;
        CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
        CHECK_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
    }
    SUBCASE("mismatched tile size") {
        crop.tile_px = 112;
        CHECK_THROWS_AS(model.compress(noise(224, 224, 6), crop), ConfigError);
    }
}
