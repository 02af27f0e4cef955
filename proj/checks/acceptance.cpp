#include "acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "th2/coords.hpp"
#include "th2/crop.hpp"
#include "th2/errors.hpp"
#include "th2/pipeline.hpp"
#include "th2/planner.hpp"
#include "th2/resampler.hpp"
#include "th2/shards.hpp"
#include "th2/spe.hpp"

namespace th2::acceptance {

namespace fs = std::filesystem;

namespace {

// Collects the first few failures; the outcome passes when none were recorded.
class Report {
   public:
    void fail(const std::string& what) {
        if (failures_++ < 5) msgs_ << (failures_ > 1 ? "; " : "") << what;
    }
    template <class... Args>
    void expect(bool ok, Args&&... what) {
        if (ok) return;
        std::ostringstream os;
        (os << ... << what);
        fail(os.str());
    }
    void note(const std::string& s) { notes_ << (notes_.tellp() > 0 ? ", " : "") << s; }
    Outcome outcome() const {
        if (failures_ == 0) return {true, notes_.str()};
        return {false, std::to_string(failures_) + " failure(s): " + msgs_.str()};
    }

   private:
    std::size_t failures_ = 0;
    std::ostringstream msgs_, notes_;
};

Image random_image(std::size_t w, std::size_t h, Rng& rng) {
    Image img(w, h, 3);
    for (double& p : img.pixels) p = rng.uniform();
    return img;
}

// A scratch directory removed on scope exit.
struct ScratchDir {
    fs::path path;
    explicit ScratchDir(const std::string& tag) {
        Rng rng(default_seed(0) ^ static_cast<std::uint64_t>(
                                      std::chrono::steady_clock::now().time_since_epoch().count()));
        path = fs::temp_directory_path() / ("th2-" + tag + "-" + rng.state_hex());
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// ---- 1 -------------------------------------------------------------------------

Outcome compression_constant() {
    Report r;
    const FrontendConfig fcfg;
    const Frontend model = Frontend::init(fcfg, 11);
    Rng rng(5);
    CropConfig no_thumb;
    no_thumb.thumbnail = false;

    auto wide = model.compress(random_image(448, 224, rng), no_thumb);
    r.expect(wide.tokens.dim(0) == 32, "448x224 emitted ", wide.tokens.dim(0), " tokens");
    r.expect(wide.patch_tokens == 16 * wide.tokens.dim(0), "448x224 ratio ", wide.patch_tokens, "/", wide.tokens.dim(0));
    auto square = model.compress(random_image(224, 224, rng), no_thumb);
    r.expect(square.tokens.dim(0) == 16, "224x224 emitted ", square.tokens.dim(0), " tokens");
    r.expect(square.patch_tokens == 16 * square.tokens.dim(0), "224x224 ratio");
    auto multi = model.compress(random_image(672, 448, rng), CropConfig{});
    r.expect(multi.tokens.dim(0) * 16 == multi.patch_tokens && multi.tokens.dim(0) == 16 * 7,
             "672x448 with thumbnail emitted ", multi.tokens.dim(0));

    // Structural path for every admissible grid: the real rearrangement and
    // grouping on placeholder query outputs.
    const std::size_t per_tile_patches = patchify(Image(224, 224, 3), fcfg.encoder.patch).dim(0);
    std::size_t grids = 0;
    for (std::size_t area : {std::size_t{36}, std::size_t{72}}) {
        CropConfig cfg;
        cfg.max_area = area;
        for (bool thumb : {false, true}) {
            cfg.thumbnail = thumb;
            for (std::size_t rows = 1; rows <= 12; ++rows)
                for (std::size_t cols = 1; cols <= 12; ++cols) {
                    if (!grid_admissible(rows, cols, cfg)) continue;
                    ++grids;
                    const CropPlan plan = plan_crop(cols * 224, rows * 224, cfg);
                    r.expect(plan.rows == rows && plan.cols == cols, "native grid ", rows, "x", cols, " not kept");
                    const std::size_t patches = plan.total_tiles() * per_tile_patches;
                    const std::size_t q = 64 * rows * cols;
                    Tensor queries({q, 1}, std::vector<double>(q, 1.0));
                    auto order = rearrange_order(rows, cols);
                    std::size_t out = group_concat(gather_rows(queries, order), 8 * cols, 4).dim(0);
                    if (thumb) out += group_concat(Tensor::zeros({64, 1}), 8, 4).dim(0);
                    r.expect(out == frontend_token_count(plan, fcfg), "token count disagrees at ", rows, "x", cols);
                    r.expect(patches == 16 * out, "ratio ", patches, "/", out, " at ", rows, "x", cols);
                }
        }
    }
    r.note(std::to_string(grids) + " grid/config cases at ratio 16");
    return r.outcome();
}

// ---- 2 -------------------------------------------------------------------------

Outcome crop_example() {
    Report r;
    const CropConfig cfg;
    const CropPlan p = plan_crop(896, 672, cfg);
    r.expect(p.cols == 4 && p.rows == 3, "896x672 gave ", p.cols, "x", p.rows);
    r.expect(!(p.cols == 8 && p.rows == 6), "896x672 gave the 8x6 grid");
    r.expect(cfg.max_pixels() == 1806336, "pixel cap ", cfg.max_pixels());
    r.expect(cfg.max_long_edge() == 2688, "long edge cap ", cfg.max_long_edge());

    std::size_t cases = 0;
    std::vector<std::size_t> sizes;
    for (std::size_t s = 1; s <= 12000; s = s < 64 ? s + 9 : s * 107 / 100 + 1) sizes.push_back(s);
    for (std::size_t s : {223, 224, 225, 2687, 2688, 2689}) sizes.push_back(s);
    for (std::size_t w : sizes)
        for (std::size_t h : sizes) {
            const CropPlan plan = plan_crop(w, h, cfg);
            ++cases;
            r.expect(grid_admissible(plan.rows, plan.cols, cfg), w, "x", h, " inadmissible");
            r.expect(plan.scaled_w * plan.scaled_h <= cfg.max_pixels(), w, "x", h, " over pixel cap");
            r.expect(std::max(plan.scaled_w, plan.scaled_h) <= cfg.max_long_edge(), w, "x", h, " over long edge");
            const auto [br, bc] = oracle::crop_grid_bruteforce(w, h, cfg);
            r.expect(br == plan.rows && bc == plan.cols, w, "x", h, " chose ", plan.rows, "x", plan.cols,
                     ", oracle ", br, "x", bc);
        }
    r.note(std::to_string(cases) + " sizes swept");
    return r.outcome();
}

// ---- 3 -------------------------------------------------------------------------

Outcome coordinate_tokens() {
    Report r;
    Rng rng(3);
    const CoordVocab vocab;
    const double bound = 0.5 / 999.0 + 1e-12;
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double xs[2] = {rng.uniform(), rng.uniform()}, ys[2] = {rng.uniform(), rng.uniform()};
        if (i % 100 == 0) xs[1] = 1.0;  // exercise the top edge
        const BBox box{std::min(xs[0], xs[1]), std::min(ys[0], ys[1]), std::max(xs[0], xs[1]), std::max(ys[0], ys[1])};
        const auto tokens = encode_box(box, vocab);
        r.expect(tokens.size() == 7, "box ", i, " encoded to ", tokens.size(), " tokens");
        const auto digits = encode_box_digits(box);
        r.expect(digits.size() == 25, "box ", i, " digit form has ", digits.size(), " tokens");
        const BBox back = decode_box(tokens, vocab);
        for (double e : {back.x1 - box.x1, back.y1 - box.y1, back.x2 - box.x2, back.y2 - box.y2}) {
            worst = std::max(worst, std::fabs(e));
        }
    }
    r.expect(worst <= bound, "round-trip error ", worst, " exceeds 0.5/999");
    r.note("max round-trip error " + std::to_string(worst));
    return r.outcome();
}

// ---- 4 -------------------------------------------------------------------------

Outcome spe_correctness() {
    Report r;
    constexpr std::size_t kHeads = 8, kDim = 64, dh = kDim / kHeads;
    const double s = std::sqrt(double(dh));
    Rng rng(4);
    double worst_norm = 0, worst_angle = 0, worst_oracle = 0;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> e0(kDim), e1(kDim);
        for (auto& x : e0) x = rng.normal() * rng.uniform(0.1, 3.0);
        for (auto& x : e1) x = rng.normal() * rng.uniform(0.1, 3.0);
        for (int k = 0; k < 100; ++k) {
            const double t = k / 99.0;
            const auto e = spe_interpolate_heads(e0, e1, kHeads, t);
            for (std::size_t h = 0; h < kHeads; ++h) {
                const std::vector<double> a(e0.begin() + h * dh, e0.begin() + (h + 1) * dh);
                const std::vector<double> b(e1.begin() + h * dh, e1.begin() + (h + 1) * dh);
                const std::vector<double> out(e.begin() + h * dh, e.begin() + (h + 1) * dh);
                double n = 0;
                for (double x : out) n += x * x;
                worst_norm = std::max(worst_norm, std::fabs(std::sqrt(n) - s));
                const double theta = oracle::angle_between(a, b);
                worst_angle = std::max(worst_angle, std::fabs(oracle::angle_between(a, out) - t * theta));
                const auto ref = oracle::slerp_reference(a, b, t);
                for (std::size_t i = 0; i < dh; ++i) worst_oracle = std::max(worst_oracle, std::fabs(ref[i] - out[i]));
                if (k == 0 || k == 99) {
                    const auto& src = k == 0 ? a : b;
                    double acc = 0;
                    for (double x : src) acc += x * x;
                    const double nn = std::sqrt(acc);
                    for (std::size_t i = 0; i < dh; ++i) {
                        r.expect(out[i] == s * (src[i] / nn), "endpoint t=", t, " head ", h, " not exact");
                    }
                }
            }
        }
    }
    r.expect(worst_norm <= 1e-9, "norm error ", worst_norm);
    r.expect(worst_angle <= 1e-9, "angle error ", worst_angle);
    r.expect(worst_oracle <= 1e-9, "oracle deviation ", worst_oracle);
    std::ostringstream os;
    os << "norm " << worst_norm << ", angle " << worst_angle << ", oracle " << worst_oracle;
    r.note(os.str());
    return r.outcome();
}

// ---- 5 -------------------------------------------------------------------------

Outcome rearrangement() {
    Report r;
    for (std::size_t rows = 1; rows <= 12; ++rows)
        for (std::size_t cols = 1; cols <= 12; ++cols) {
            const auto order = rearrange_order(rows, cols);
            r.expect(order == oracle::rearrange_order_bruteforce(rows, cols, 8), "order differs at ", rows, "x", cols);
            const auto perm = rearrange_permutation(rows, cols);
            std::vector<bool> seen(perm.size(), false);
            bool bijective = perm.size() == 64 * rows * cols;
            for (std::size_t p : perm) {
                if (p >= seen.size() || seen[p]) bijective = false;
                else seen[p] = true;
            }
            r.expect(bijective, "not a bijection at ", rows, "x", cols);
            for (std::size_t k = 0; k < perm.size() && k < order.size(); ++k) {
                if (order[perm[k]] != k) {
                    r.fail("order is not the inverse at " + std::to_string(rows) + "x" + std::to_string(cols));
                    break;
                }
            }
        }
    // Two side-by-side tiles: each output row alternates 8 queries of the
    // left tile with 8 of the right.
    const auto order = rearrange_order(1, 2);
    for (std::size_t row = 0; row < 8; ++row)
        for (std::size_t x = 0; x < 16; ++x) {
            const std::size_t expect = (x < 8 ? 0 : 64) + row * 8 + x % 8;
            r.expect(order[row * 16 + x] == expect, "1x2 interleave broken at row ", row, " col ", x);
        }
    r.note("144 grids + 1x2 interleave");
    return r.outcome();
}

// ---- 6 -------------------------------------------------------------------------

Outcome gradient_integrity() {
    Report r;
    Rng rng(6);
    auto rnd = [&](Shape s, double lo = -1.0, double hi = 1.0) { return oracle::random_tensor(std::move(s), rng, lo, hi); };
    // Scalar probe: sum(f(x) * w) with fixed random w.
    auto probe = [&](const Tensor& y, const Tensor& w) { return sum(mul(y, w)); };
    struct OpCase {
        std::string name;
        std::vector<Tensor> params;
        std::function<Tensor()> loss;
    };
    std::vector<OpCase> cases;
    {
        Tensor a = rnd({3, 4}), b = rnd({4, 5}), w = rnd({3, 5});
        cases.push_back({"matmul", {a, b}, [=] { return probe(matmul(a, b), w); }});
    }
    {
        Tensor a = rnd({3, 4}), b = rnd({3, 4}), v = rnd({4}), w = rnd({3, 4});
        cases.push_back({"add", {a, b}, [=] { return probe(add(a, b), w); }});
        cases.push_back({"add broadcast", {a, v}, [=] { return probe(add(a, v), w); }});
        cases.push_back({"sub", {a, b}, [=] { return probe(sub(a, b), w); }});
        cases.push_back({"sub broadcast", {a, v}, [=] { return probe(sub(a, v), w); }});
        cases.push_back({"mul", {a, b}, [=] { return probe(mul(a, b), w); }});
        cases.push_back({"scale", {a}, [=] { return probe(scale(a, -2.5), w); }});
        cases.push_back({"gelu", {a}, [=] { return probe(gelu(scale(a, 3.0)), w); }});
        cases.push_back({"sum", {a}, [=] { return scale(sum(a), 1.5); }});
        cases.push_back({"mean", {a}, [=] { return scale(mean(mul(a, a)), 1.5); }});
        cases.push_back({"softmax_rows", {a}, [=] { return probe(softmax_rows(scale(a, 2.0)), w); }});
        cases.push_back({"transpose", {a}, [=] { return probe(transpose(transpose(a)), w); }});
        cases.push_back({"reshape", {a}, [=] { return probe(reshape(reshape(a, {2, 6}), {3, 4}), w); }});
    }
    {
        // entries bounded away from the kink at zero
        std::vector<double> v(12);
        for (double& x : v) x = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
        Tensor a({3, 4}, v), w = rnd({3, 4});
        cases.push_back({"abs", {a}, [=] { return probe(abs(a), w); }});
    }
    {
        Tensor x = rnd({3, 6}), g = rnd({6}, 0.5, 1.5), b = rnd({6}), w = rnd({3, 6});
        cases.push_back({"layer_norm", {x, g, b}, [=] { return probe(layer_norm(x, g, b), w); }});
    }
    {
        Tensor x = rnd({4, 6, 3}), w = rnd({2, 3, 3});
        cases.push_back({"max_pool_2x2", {x}, [=] { return probe(max_pool_2x2(x), w); }});
    }
    {
        Tensor a = rnd({2, 3}), b = rnd({4, 3}), c = rnd({2, 5}), w0 = rnd({6, 3}), w1 = rnd({2, 8});
        cases.push_back({"concat rows", {a, b}, [=] {
                             std::vector<Tensor> parts{a, b};
                             return probe(concat(parts, 0), w0);
                         }});
        cases.push_back({"concat cols", {a, c}, [=] {
                             std::vector<Tensor> parts{a, c};
                             return probe(concat(parts, 1), w1);
                         }});
    }
    {
        Tensor x = rnd({5, 4}), w0 = rnd({2, 4}), w1 = rnd({5, 3}), wg = rnd({6, 4});
        cases.push_back({"slice rows", {x}, [=] { return probe(slice(x, 0, 1, 3), w0); }});
        cases.push_back({"slice cols", {x}, [=] { return probe(slice(x, 1, 1, 4), w1); }});
        const std::vector<std::size_t> idx{4, 0, 0, 2, 3, 4};
        cases.push_back({"gather_rows", {x}, [=] { return probe(gather_rows(x, idx), wg); }});
    }
    std::size_t entries = 0;
    for (auto& c : cases) {
        const auto g = oracle::check_gradients(c.loss, c.params, 1e-4);
        entries += g.checked;
        r.expect(g.passed, c.name, ": ", g.worst);
    }

    // Composed frontend on a 2-tile input. A coarse patch grid keeps each
    // forward pass cheap; every layer of the path still takes part.
    FrontendConfig fcfg;
    fcfg.encoder.patch = 28;
    fcfg.encoder.width = 8;
    fcfg.encoder.depth = 8;
    fcfg.encoder.mlp_hidden = 16;
    fcfg.encoder.recorded_layers = {1, 3, 5, 7};
    fcfg.routing = {{7, 5, 3, 1}};
    fcfg.resampler.d_model = 32;
    fcfg.resampler.n_heads = 4;
    fcfg.resampler.qpn_hidden = 16;
    fcfg.resampler.mlp_hidden = 32;
    fcfg.resampler.d_out = 16;
    const Frontend model = Frontend::init(fcfg, 21);
    const Image img = random_image(448, 224, rng);
    CropConfig crop;
    crop.thumbnail = false;
    const Tensor w = rnd({8, 16});
    auto loss = [&] { return probe(model.compress(img, crop).tokens, w); };
    const auto g = oracle::check_gradients(loss, model.parameters(), 1e-3, 1e-8, 1e-5, 2);
    r.expect(g.passed, "frontend: ", g.worst);
    r.note(std::to_string(cases.size()) + " op cases (" + std::to_string(entries) + " entries), frontend " +
           std::to_string(g.checked) + " sampled entries");
    return r.outcome();
}

// ---- 7 -------------------------------------------------------------------------

std::vector<Sample> synthetic_samples(std::size_t n, Rng& rng, const std::string& tag) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        PackItem item{sample_key(i), {}, rng.below(20)};
        const std::size_t len = 1 + rng.below(1500);
        for (std::size_t k = 0; k < len; ++k) item.tokens.push_back(static_cast<std::int32_t>(1 + rng.below(30000)));
        Sample s = sample_from_pack_item(item);
        s.members.emplace_back("txt", tag + " sample " + std::to_string(i));
        out.push_back(std::move(s));
    }
    return out;
}

Outcome resume_exactness() {
    Report r;
    ScratchDir scratch("resume");
    Rng rng(7);
    std::size_t total_batches = 0, total_samples = 0;
    for (int trial = 0; trial < 20; ++trial) {
        PipelineConfig cfg;
        const std::size_t n_sets = 1 + rng.below(3);
        std::vector<ShardSet> sets;
        for (std::size_t d = 0; d < n_sets; ++d) {
            const std::string name = "t" + std::to_string(trial) + "d" + std::to_string(d);
            auto samples = synthetic_samples(20 + rng.below(120), rng, name);
            sets.push_back(build_shards(samples, 1 + rng.below(16), rng.next_u64(), scratch.path / name, name));
            cfg.manifests.push_back(sets.back().manifest_path().string());
            cfg.weights.push_back(rng.uniform(0.2, 3.0));
        }
        cfg.workers = 1 + rng.below(4);
        cfg.prefetch = 1 + rng.below(3);
        cfg.seed = rng.next_u64();
        cfg.policy = rng.below(4) == 0 ? ExhaustPolicy::Cycle : ExhaustPolicy::Drop;
        cfg.pack.context = 2048 + rng.below(3000);
        cfg.pack.max_tiles = 20 + rng.below(100);
        const std::size_t cap = 60;

        // batches
        std::vector<std::string> straight;
        {
            Pipeline p(cfg);
            while (straight.size() < cap) {
                auto b = p.next();
                if (!b) break;
                straight.push_back(b->serialize());
            }
        }
        const std::size_t cut = rng.below(straight.size() + 1);
        std::vector<std::string> resumed;
        std::string state_text;
        {
            Pipeline p(cfg);
            while (resumed.size() < cut) resumed.push_back(p.next()->serialize());
            state_text = p.snapshot().dump();
        }
        {
            Pipeline p(ResumeState::parse(state_text));
            while (resumed.size() < cap) {
                auto b = p.next();
                if (!b) break;
                resumed.push_back(b->serialize());
            }
        }
        r.expect(resumed == straight, "trial ", trial, ": batches differ after resuming at ", cut);
        total_batches += straight.size();

        // samples
        const std::size_t sample_cap = 400;
        std::vector<std::string> seq;
        {
            SampleStream s(cfg);
            while (seq.size() < sample_cap) {
                auto m = s.next();
                if (!m) break;
                seq.push_back(std::to_string(m->source) + ":" + sample_to_json(m->sample).dump());
            }
        }
        const std::size_t scut = rng.below(seq.size() + 1);
        std::vector<std::string> seq2;
        {
            SampleStream s(cfg);
            while (seq2.size() < scut) {
                auto m = s.next();
                seq2.push_back(std::to_string(m->source) + ":" + sample_to_json(m->sample).dump());
            }
            state_text = s.snapshot().dump();
        }
        {
            SampleStream s(ResumeState::parse(state_text));
            while (seq2.size() < sample_cap) {
                auto m = s.next();
                if (!m) break;
                seq2.push_back(std::to_string(m->source) + ":" + sample_to_json(m->sample).dump());
            }
        }
        r.expect(seq2 == seq, "trial ", trial, ": samples differ after resuming at ", scut);
        total_samples += seq.size();

        // worker disjointness and completeness
        for (const auto& set : sets) {
            auto shared = std::make_shared<const ShardSet>(set);
            std::multiset<std::string> seen;
            for (std::size_t w = 0; w < cfg.workers; ++w) {
                WorkerStream ws(shared, w, cfg.workers);
                while (auto s = ws.next()) seen.insert(s->key);
            }
            std::set<std::string> unique(seen.begin(), seen.end());
            r.expect(seen.size() == set.total && unique.size() == set.total, "trial ", trial, " dataset ",
                     set.dataset, ": workers read ", seen.size(), " (", unique.size(), " distinct) of ", set.total);
        }
    }
    r.note("20 configs, " + std::to_string(total_batches) + " batches, " + std::to_string(total_samples) + " samples");
    return r.outcome();
}

// ---- 8 -------------------------------------------------------------------------

Outcome packing_budgets() {
    Report r;
    Rng rng(8);
    const PackConfig cfg;
    std::vector<PackItem> items;
    std::vector<PackedBatch> batches;
    Packer packer(cfg);
    std::size_t n = 0;
    while (batches.size() < 10000) {
        PackItem it{sample_key(n++), {}, rng.below(rng.below(4) == 0 ? 109 : 40)};
        it.tokens.assign(1 + rng.below(rng.below(3) == 0 ? 4096 : 1200), 7);
        items.push_back(it);
        if (auto b = packer.push(std::move(it))) batches.push_back(std::move(*b));
    }
    if (auto b = packer.flush()) batches.push_back(std::move(*b));

    const auto expected = oracle::greedy_pack_keys(items, cfg);
    r.expect(expected.size() == batches.size(), "packer made ", batches.size(), " batches, oracle ", expected.size());
    for (std::size_t k = 0; k < batches.size(); ++k) {
        const PackedBatch& b = batches[k];
        r.expect(b.tokens.size() == cfg.context && b.segments.size() == cfg.context, "batch ", k, " length");
        r.expect(b.used <= cfg.context && b.tiles <= cfg.max_tiles, "batch ", k, " over budget");
        if (k < expected.size()) r.expect(b.keys == expected[k], "batch ", k, " differs from first-fit oracle");
        // segments: 1..k in contiguous runs, then padding only
        std::uint32_t current = 1;
        bool ok = b.used == 0 || b.segments[0] == 1;
        for (std::size_t i = 1; i < b.used && ok; ++i) {
            if (b.segments[i] == current + 1) ++current;
            else if (b.segments[i] != current) ok = false;
        }
        ok = ok && current == b.keys.size();
        for (std::size_t i = b.used; i < b.segments.size() && ok; ++i) ok = b.segments[i] == kPadSegment;
        r.expect(ok, "batch ", k, " segments are not contiguous blocks");
    }
    // full mask against block structure on a handful of batches
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& b = batches[k];
        const auto mask = b.dense_mask();
        const std::size_t c = b.segments.size();
        bool ok = true;
        for (std::size_t i = 0; i < c && ok; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const bool same = i < b.used && j < b.used && b.segments[i] == b.segments[j];
                if (bool(mask[i * c + j]) != same) {
                    ok = false;
                    break;
                }
            }
        r.expect(ok, "dense mask of batch ", k, " is not block-diagonal");
    }
    // oversized samples
    Packer guard(cfg, {PackItem{"open", std::vector<std::int32_t>(10, 1), 1}});
    for (int i = 0; i < 200; ++i) {
        PackItem big{"big" + std::to_string(i), {}, 0};
        if (i % 2) {
            big.tokens.assign(cfg.context + 1 + rng.below(2000), 1);
        } else {
            big.tokens.assign(1 + rng.below(100), 1);
            big.tiles = cfg.max_tiles + 1 + rng.below(50);
        }
        try {
            guard.push(big);
            r.fail("oversized sample " + big.key + " accepted");
        } catch (const SampleTooLargeError& e) {
            r.expect(e.key == big.key, "error names ", e.key, " instead of ", big.key);
        }
    }
    r.expect(guard.pending().size() == 1, "rejected samples disturbed the open pack");
    r.note(std::to_string(batches.size()) + " batches from " + std::to_string(items.size()) + " samples");
    return r.outcome();
}

// ---- 9 -------------------------------------------------------------------------

Outcome planner_optimality() {
    Report r;
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        StageModel m;
        const std::size_t n = 1 + rng.below(12);
        m.stages = 1 + rng.below(std::min<std::size_t>(4, n + 1));
        m.micro_batches = 1 + rng.below(16);
        const bool integral = i % 2 == 0;  // integer costs make ties common
        for (std::size_t k = 0; k < n; ++k) m.layer_costs.push_back(integral ? double(1 + rng.below(6)) : rng.uniform(0.1, 5.0));
        m.vision_cost = integral ? double(rng.below(10)) : rng.uniform(0.0, 8.0);
        const StagePlan plan = partition(m);
        const auto brute = oracle::partition_bruteforce(m);
        r.expect(std::fabs(plan.bottleneck - brute.bottleneck) <= 1e-9 * std::max(1.0, brute.bottleneck), "instance ", i,
                 ": bottleneck ", plan.bottleneck, " vs ", brute.bottleneck);
        r.expect(plan.boundaries == brute.boundaries, "instance ", i, ": boundaries differ");
        double stage0 = m.vision_cost;
        for (std::size_t k = 0; k < plan.layers_per_stage[0]; ++k) stage0 += m.layer_costs[k];
        r.expect(std::fabs(plan.stage_costs[0] - stage0) <= 1e-12 * std::max(1.0, stage0), "instance ", i,
                 ": stage 0 lacks the vision cost");
        r.expect(plan.bubble >= 0.0 && plan.bubble < 1.0, "instance ", i, ": bubble ", plan.bubble);
    }
    r.note("200 instances");
    return r.outcome();
}

// ---- 10 ------------------------------------------------------------------------

Outcome detection_head() {
    Report r;
    Rng rng(10);
    const DetectionHead head = DetectionHead::init(16, 24, rng);
    const Tensor hidden = oracle::random_tensor({5, 16}, rng);
    const Tensor pred = head.predict(hidden);
    r.expect(detection_head_loss(hidden, pred.detach(), head).item() == 0.0, "exact prediction has nonzero loss");
    for (double delta : {1e-6, -0.25, 0.5, 3.0}) {
        std::vector<double> t(pred.data().begin(), pred.data().end());
        for (double& x : t) x += delta;
        const double l = detection_head_loss(hidden, Tensor(pred.shape(), t), head).item();
        r.expect(std::fabs(l - std::fabs(delta)) <= 1e-12 * std::max(1.0, std::fabs(delta)), "offset ", delta,
                 " gave loss ", l);
        r.expect(l > 0.0, "nonzero offset ", delta, " gave zero loss");
    }
    // a single perturbed coordinate is enough to make the loss positive
    {
        std::vector<double> t(pred.data().begin(), pred.data().end());
        t[7] += 1e-9;
        r.expect(detection_head_loss(hidden, Tensor(pred.shape(), t), head).item() > 0.0, "single-entry miss gave zero loss");
    }
    const Tensor targets = oracle::random_tensor({5, 4}, rng, 0.0, 1.0);
    std::vector<Tensor> params;
    head.collect(params);
    params.push_back(hidden);
    const auto g = oracle::check_gradients([&] { return detection_head_loss(hidden, targets, head); }, params, 1e-5,
                                           1e-9, 1e-6);
    r.expect(g.passed, "gradient: ", g.worst);
    r.note(std::to_string(g.checked) + " gradient entries");
    return r.outcome();
}

}  // namespace

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all{
        {1, "compression constant", 10.0, compression_constant},
        {2, "crop example and caps", 1.0, crop_example},
        {3, "coordinate token counts", 1.0, coordinate_tokens},
        {4, "SPE correctness", 5.0, spe_correctness},
        {5, "rearrangement permutation", 5.0, rearrangement},
        {6, "gradient integrity", 60.0, gradient_integrity},
        {7, "resume exactness", 30.0, resume_exactness},
        {8, "packing budgets", 10.0, packing_budgets},
        {9, "planner optimality", 10.0, planner_optimality},
        {10, "detection head", 5.0, detection_head},
    };
    return all;
}

Result run(const Criterion& c) {
    Result res{c.id, c.name, false, 0.0, c.time_limit_s, {}};
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = c.run();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.passed = o.passed && res.seconds <= c.time_limit_s;
    res.detail = o.detail;
    if (o.passed && !res.passed) res.detail = "over time limit; " + res.detail;
    return res;
}

std::string format(const Result& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << (r.passed ? "PASS " : "FAIL ") << (r.id < 10 ? " " : "") << r.id << " " << r.name << " (" << r.seconds
       << " s / " << r.time_limit_s << " s)";
    if (!r.detail.empty()) os << ": " << r.detail;
    return os.str();
}

}  // namespace th2::acceptance
