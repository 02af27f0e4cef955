// Command-line entry point. Machine-readable output goes to stdout as one JSON
// object per line; stderr carries diagnostics only.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "acceptance.hpp"
#include "th2/coords.hpp"
#include "th2/crop.hpp"
#include "th2/errors.hpp"
#include "th2/pipeline.hpp"
#include "th2/planner.hpp"
#include "th2/resampler.hpp"
#include "th2/rng.hpp"
#include "th2/shards.hpp"
#include "th2/spe.hpp"

using nlohmann::json;
using namespace th2;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

void emit(const json& j) { std::cout << j.dump() << '\n'; }

template <class T>
std::vector<T> parse_list(const std::string& text, const std::string& what) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream one(item);
        T v{};
        if (!(one >> v) || !(one >> std::ws).eof()) throw CLI::ValidationError(what, "bad list entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw CLI::ValidationError(what, "empty list");
    return out;
}

std::vector<PackItem> read_items(const std::string& path) {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (path != "-") {
        file.open(path);
        if (!file) throw InputError("cannot open " + path);
        in = &file;
    }
    std::vector<PackItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(*in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            items.push_back({j.at("key").get<std::string>(), j.at("tokens").get<std::vector<std::int32_t>>(),
                             j.value("tiles", std::size_t{0})});
        } catch (const json::exception& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

json sample_line(const MixedSample& m) {
    json j = {{"source", m.source}, {"key", m.sample.key}};
    json exts = json::array();
    for (const auto& [ext, bytes] : m.sample.members) exts.push_back(ext);
    j["members"] = exts;
    if (m.sample.member("json")) {
        const PackItem it = pack_item_from_sample(m.sample);
        j["tokens"] = it.tokens.size();
        j["tiles"] = it.tiles;
    }
    return j;
}

json batch_line(const PackedBatch& b, bool summary) {
    if (!summary) return b.to_json();
    return {{"keys", b.keys}, {"used", b.used}, {"padding", b.padding()}, {"tiles", b.tiles}};
}

void write_state(const ResumeState& st, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << st.dump() << '\n';
}

// Shared flags of the streaming subcommands.
struct StreamFlags {
    std::vector<std::string> manifests;
    std::string weights;
    std::size_t workers = 1;
    std::size_t prefetch = 2;
    std::optional<std::uint64_t> seed;
    std::string policy = "drop";
    std::size_t context = 4096;
    std::size_t max_tiles = 108;
    std::size_t limit = 0;  // 0 = until exhausted
    std::string state_out;
    bool summary = false;

    void add(CLI::App* app, bool packing) {
        app->add_option("--manifest", manifests, "Shard manifest; repeat to mix datasets")->required();
        app->add_option("--weights", weights, "Comma-separated mixing weights, one per manifest (default uniform)");
        app->add_option("--workers", workers, "Data workers per dataset")->check(CLI::PositiveNumber);
        app->add_option("--prefetch", prefetch, "Samples each worker reads ahead")->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "Mixer seed");
        app->add_option("--policy", policy, "Exhausted-source policy")->check(CLI::IsMember({"drop", "cycle"}));
        app->add_option("--limit", limit, "Stop after this many outputs (0 = all)");
        app->add_option("--state-out", state_out, "Write the resume state here when stopping");
        if (packing) {
            app->add_option("--context", context, "Pack length in tokens")->check(CLI::PositiveNumber);
            app->add_option("--max-tiles", max_tiles, "Image tiles allowed per pack");
            app->add_flag("--summary", summary, "Print keys and budgets instead of full buffers");
        }
    }

    PipelineConfig config() const {
        PipelineConfig cfg;
        cfg.manifests = manifests;
        if (!weights.empty()) cfg.weights = parse_list<double>(weights, "--weights");
        cfg.workers = workers;
        cfg.prefetch = prefetch;
        cfg.seed = seed.value_or(default_seed(0));
        cfg.policy = exhaust_policy_from_string(policy);
        cfg.pack.context = context;
        cfg.pack.max_tiles = max_tiles;
        return cfg;
    }
};

void run_stream(SampleStream& s, std::size_t limit, const std::string& state_out) {
    std::size_t n = 0;
    while (limit == 0 || n < limit) {
        auto m = s.next();
        if (!m) break;
        emit(sample_line(*m));
        ++n;
    }
    if (!state_out.empty()) write_state(s.snapshot(), state_out);
}

void run_pack(Pipeline& p, std::size_t limit, const std::string& state_out, bool summary) {
    std::size_t n = 0;
    while (limit == 0 || n < limit) {
        auto b = p.next();
        if (!b) break;
        emit(batch_line(*b, summary));
        ++n;
    }
    if (!state_out.empty()) write_state(p.snapshot(), state_out);
}

Image synthetic_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.resize(w * h * 3);
    Rng rng(seed);
    for (double& p : img.pixels) p = rng.uniform();
    return img;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"th2: image compression front-end, coordinate codec, data pipeline and pipeline planner"};
    app.require_subcommand(1);
    app.allow_extras(false);

    // crop-plan
    auto* crop = app.add_subcommand("crop-plan", "Choose the sub-image grid for an image size");
    std::size_t crop_w = 0, crop_h = 0;
    CropConfig crop_cfg;
    bool crop_no_thumb = false;
    crop->add_option("--width", crop_w, "Image width in pixels")->required();
    crop->add_option("--height", crop_h, "Image height in pixels")->required();
    crop->add_option("--max-area", crop_cfg.max_area, "Largest rows*cols grid");
    crop->add_option("--max-side", crop_cfg.max_side, "Largest rows or cols");
    crop->add_option("--tile", crop_cfg.tile_px, "Tile edge in pixels");
    crop->add_flag("--no-thumbnail", crop_no_thumb, "Omit the global thumbnail tile");

    // spe
    auto* spe = app.add_subcommand("spe", "Print a spherical position embedding grid, one cell per line");
    std::size_t spe_rows = 0, spe_cols = 0, spe_dim = 16, spe_heads = 4;
    std::optional<std::uint64_t> spe_seed;
    spe->add_option("--rows", spe_rows, "Grid rows")->required();
    spe->add_option("--cols", spe_cols, "Grid columns")->required();
    spe->add_option("--dim", spe_dim, "Embedding width");
    spe->add_option("--heads", spe_heads, "Attention heads; each head slice is normalized separately");
    spe->add_option("--seed", spe_seed, "Endpoint seed");

    // compress
    auto* compress = app.add_subcommand("compress", "Run the default front-end on an image");
    std::string cmp_image;
    std::size_t cmp_w = 448, cmp_h = 224;
    bool cmp_no_thumb = false;
    std::optional<std::uint64_t> cmp_seed;
    compress->add_option("--image", cmp_image, "Binary PPM (P6) input; a random image is used when absent")
        ->check(CLI::ExistingFile);
    compress->add_option("--width", cmp_w, "Width of the random image");
    compress->add_option("--height", cmp_h, "Height of the random image");
    compress->add_flag("--no-thumbnail", cmp_no_thumb, "Omit the global thumbnail tile");
    compress->add_option("--seed", cmp_seed, "Weight and random-image seed");

    // coords
    auto* coords = app.add_subcommand("coords", "Bounding-box token codec");
    coords->require_subcommand(1);
    CoordVocab vocab;
    auto* enc = coords->add_subcommand("encode", "Box to token ids");
    std::string enc_box;
    bool enc_digits = false;
    enc->add_option("--box", enc_box, "x1,y1,x2,y2 normalized to [0,1]")->required();
    enc->add_option("--bins", vocab.bins, "Coordinate bins");
    enc->add_option("--base", vocab.base, "Id of the first box token");
    enc->add_flag("--digits", enc_digits, "Emit the decimal-text baseline instead");
    auto* dec = coords->add_subcommand("decode", "Token ids to box");
    std::string dec_tokens;
    dec->add_option("--tokens", dec_tokens, "Comma-separated token ids")->required();
    dec->add_option("--bins", vocab.bins, "Coordinate bins");
    dec->add_option("--base", vocab.base, "Id of the first box token");

    // shard
    auto* shard = app.add_subcommand("shard", "Build, stream, pack and resume sharded datasets");
    shard->require_subcommand(1);
    auto* build = shard->add_subcommand("build", "Shuffle samples into tar chunks with a manifest");
    std::string b_out, b_dataset = "data", b_input;
    std::size_t b_samples = 0, b_per_chunk = 64, b_max_tokens = 2048, b_max_tiles = 12;
    std::optional<std::uint64_t> b_seed;
    build->add_option("--out", b_out, "Output directory")->required();
    build->add_option("--dataset", b_dataset, "Dataset name, used for file names");
    auto* b_in = build->add_option("--input", b_input, "JSON lines of {key, tokens, tiles}; '-' for stdin");
    build->add_option("--samples", b_samples, "Number of random samples to generate")->excludes(b_in);
    build->add_option("--per-chunk", b_per_chunk, "Samples per tar chunk")->check(CLI::PositiveNumber);
    build->add_option("--max-tokens", b_max_tokens, "Longest random sample")->check(CLI::PositiveNumber);
    build->add_option("--max-sample-tiles", b_max_tiles, "Most tiles in a random sample");
    build->add_option("--seed", b_seed, "Shuffle and generation seed");

    auto* stream = shard->add_subcommand("stream", "Emit mixed samples");
    StreamFlags stream_flags;
    stream_flags.add(stream, false);
    auto* spack = shard->add_subcommand("pack", "Emit packed batches from mixed samples");
    StreamFlags pack_flags;
    pack_flags.add(spack, true);
    auto* resume = shard->add_subcommand("resume", "Continue a stream or pack run from a saved state");
    std::string r_state, r_state_out;
    std::size_t r_limit = 0;
    bool r_summary = false;
    resume->add_option("--state", r_state, "Resume state written by --state-out")->required()->check(CLI::ExistingFile);
    resume->add_option("--limit", r_limit, "Stop after this many outputs (0 = all)");
    resume->add_option("--state-out", r_state_out, "Write the resume state here when stopping");
    resume->add_flag("--summary", r_summary, "For pack states, print keys and budgets only");

    // pack
    auto* pack_cmd = app.add_subcommand("pack", "Pack JSON-lines samples into fixed-length batches");
    std::string p_input = "-";
    PackConfig p_cfg;
    bool p_summary = false;
    pack_cmd->add_option("--input", p_input, "JSON lines of {key, tokens, tiles}; '-' for stdin");
    pack_cmd->add_option("--context", p_cfg.context, "Pack length in tokens")->check(CLI::PositiveNumber);
    pack_cmd->add_option("--max-tiles", p_cfg.max_tiles, "Image tiles allowed per pack");
    pack_cmd->add_option("--pad-id", p_cfg.pad_id, "Token id used for padding");
    pack_cmd->add_flag("--summary", p_summary, "Print keys and budgets instead of full buffers");

    // pp-plan
    auto* pp = app.add_subcommand("pp-plan", "Split language layers across pipeline stages");
    std::string pp_layers;
    StageModel pp_model;
    pp->add_option("--layers", pp_layers, "Comma-separated per-layer costs")->required();
    pp->add_option("--vision", pp_model.vision_cost, "Cost of the vision front-end on stage 0");
    pp->add_option("--stages", pp_model.stages, "Pipeline stages")->required();
    pp->add_option("--micro", pp_model.micro_batches, "Micro-batches per step");

    // selftest
    auto* selftest = app.add_subcommand("selftest", "Run the acceptance suite and print one line per criterion");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (crop->parsed()) {
            crop_cfg.thumbnail = !crop_no_thumb;
            const CropPlan p = plan_crop(crop_w, crop_h, crop_cfg);
            emit({{"width", crop_w},
                  {"height", crop_h},
                  {"rows", p.rows},
                  {"cols", p.cols},
                  {"scaled_w", p.scaled_w},
                  {"scaled_h", p.scaled_h},
                  {"tiles", p.tile_count()},
                  {"thumbnail", p.has_thumbnail},
                  {"total_tiles", p.total_tiles()}});
        } else if (spe->parsed()) {
            const SpeTable table = SpeTable::random(spe_dim, spe_heads, spe_seed.value_or(default_seed(0)));
            const Tensor g = spe_grid(table, spe_rows, spe_cols);
            const auto data = g.data();
            for (std::size_t r = 0; r < spe_rows; ++r) {
                for (std::size_t c = 0; c < spe_cols; ++c) {
                    const std::size_t i = r * spe_cols + c;
                    emit({{"row", r},
                          {"col", c},
                          {"t_row", spe_axis_position(r, spe_rows)},
                          {"t_col", spe_axis_position(c, spe_cols)},
                          {"values", std::vector<double>(data.begin() + i * spe_dim, data.begin() + (i + 1) * spe_dim)}});
                }
            }
        } else if (compress->parsed()) {
            const std::uint64_t seed = cmp_seed.value_or(default_seed(0));
            const Image img = cmp_image.empty() ? synthetic_image(cmp_w, cmp_h, seed) : read_ppm(cmp_image);
            CropConfig cfg;
            cfg.thumbnail = !cmp_no_thumb;
            const Frontend model = Frontend::init(FrontendConfig{}, seed);
            const FrontendOutput out = model.compress(img, cfg);
            const auto v = out.tokens.data();
            double sum = 0, sq = 0, lo = v.empty() ? 0 : v[0], hi = lo;
            for (double x : v) {
                sum += x;
                sq += x * x;
                lo = std::min(lo, x);
                hi = std::max(hi, x);
            }
            const double n = double(v.size()), mean = v.empty() ? 0 : sum / n;
            emit({{"width", img.width},
                  {"height", img.height},
                  {"rows", out.plan.rows},
                  {"cols", out.plan.cols},
                  {"thumbnail", out.plan.has_thumbnail},
                  {"tokens", out.tokens.dim(0)},
                  {"shape", out.tokens.shape()},
                  {"patch_tokens", out.patch_tokens},
                  {"queries", out.query_count},
                  {"ratio", double(out.patch_tokens) / double(out.tokens.dim(0))},
                  {"mean", mean},
                  {"std", v.empty() ? 0 : std::sqrt(std::max(0.0, sq / n - mean * mean))},
                  {"min", lo},
                  {"max", hi}});
        } else if (enc->parsed()) {
            const auto c = parse_list<double>(enc_box, "--box");
            if (c.size() != 4) throw CLI::ValidationError("--box", "needs exactly four values");
            const BBox box{c[0], c[1], c[2], c[3]};
            if (enc_digits) {
                const auto t = encode_box_digits(box);
                emit({{"tokens", t}, {"count", t.size()}});
            } else {
                const auto t = encode_box(box, vocab);
                emit({{"tokens", t}, {"count", t.size()}});
            }
        } else if (dec->parsed()) {
            const auto ids = parse_list<TokenId>(dec_tokens, "--tokens");
            const BBox b = decode_box(ids, vocab);
            emit({{"box", {b.x1, b.y1, b.x2, b.y2}}});
        } else if (build->parsed()) {
            const std::uint64_t seed = b_seed.value_or(default_seed(0));
            std::vector<Sample> samples;
            if (!b_input.empty()) {
                for (const auto& it : read_items(b_input)) samples.push_back(sample_from_pack_item(it));
            } else {
                if (b_samples == 0) throw CLI::ValidationError("shard build", "give --input or a positive --samples");
                Rng rng = Rng(seed).split(1);
                for (std::size_t i = 0; i < b_samples; ++i) {
                    PackItem it{sample_key(i), {}, rng.below(b_max_tiles + 1)};
                    it.tokens.resize(1 + rng.below(b_max_tokens));
                    for (auto& t : it.tokens) t = static_cast<std::int32_t>(1 + rng.below(32000));
                    samples.push_back(sample_from_pack_item(it));
                }
            }
            const ShardSet s = build_shards(std::move(samples), b_per_chunk, seed, b_out, b_dataset);
            emit({{"manifest", s.manifest_path().string()}, {"samples", s.total}, {"chunks", s.chunks.size()}});
        } else if (stream->parsed()) {
            SampleStream s(stream_flags.config());
            run_stream(s, stream_flags.limit, stream_flags.state_out);
        } else if (spack->parsed()) {
            Pipeline p(pack_flags.config());
            run_pack(p, pack_flags.limit, pack_flags.state_out, pack_flags.summary);
        } else if (resume->parsed()) {
            std::ifstream in(r_state);
            const ResumeState st = ResumeState::parse({std::istreambuf_iterator<char>(in), {}});
            if (st.mode == "stream") {
                SampleStream s(st);
                run_stream(s, r_limit, r_state_out);
            } else {
                Pipeline p(st);
                run_pack(p, r_limit, r_state_out, r_summary);
            }
        } else if (pack_cmd->parsed()) {
            for (const auto& b : pack(read_items(p_input), p_cfg)) emit(batch_line(b, p_summary));
        } else if (pp->parsed()) {
            pp_model.layer_costs = parse_list<double>(pp_layers, "--layers");
            const StagePlan p = partition(pp_model);
            emit({{"boundaries", p.boundaries},
                  {"layers_per_stage", p.layers_per_stage},
                  {"stage_costs", p.stage_costs},
                  {"bottleneck", p.bottleneck},
                  {"bubble", p.bubble},
                  {"warmup_activations", p.warmup_activations}});
        } else if (selftest->parsed()) {
            std::size_t failed = 0;
            for (const auto& c : acceptance::criteria()) {
                const auto r = acceptance::run(c);
                failed += !r.passed;
                emit({{"id", r.id},
                      {"name", r.name},
                      {"passed", r.passed},
                      {"seconds", r.seconds},
                      {"limit_s", r.time_limit_s},
                      {"detail", r.detail}});
            }
            emit({{"criteria", acceptance::criteria().size()}, {"failed", failed}});
            return failed ? kDataError : 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return 0;
}
