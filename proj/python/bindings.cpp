#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "th2/coords.hpp"
#include "th2/crop.hpp"
#include "th2/errors.hpp"
#include "th2/pipeline.hpp"
#include "th2/planner.hpp"
#include "th2/resampler.hpp"
#include "th2/rng.hpp"
#include "th2/spe.hpp"

namespace py = pybind11;
using namespace th2;

namespace {

py::dict plan_to_dict(const CropPlan& p) {
    py::dict d;
    d["rows"] = p.rows;
    d["cols"] = p.cols;
    d["scaled_w"] = p.scaled_w;
    d["scaled_h"] = p.scaled_h;
    d["thumbnail"] = p.has_thumbnail;
    d["total_tiles"] = p.total_tiles();
    return d;
}

CropConfig crop_config(std::size_t max_area, std::size_t max_side, std::size_t tile, bool thumbnail) {
    CropConfig c;
    c.max_area = max_area;
    c.max_side = max_side;
    c.tile_px = tile;
    c.thumbnail = thumbnail;
    return c;
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    std::vector<std::vector<double>> out(t.dim(0));
    const std::size_t w = t.dim(1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].assign(t.data().begin() + i * w, t.data().begin() + (i + 1) * w);
    return out;
}

py::dict compress_image(const Image& img, bool thumbnail, std::uint64_t seed) {
    CropConfig crop;
    crop.thumbnail = thumbnail;
    FrontendOutput out;
    {
        py::gil_scoped_release nogil;
        out = Frontend::init(FrontendConfig{}, seed).compress(img, crop);
    }
    py::dict d = plan_to_dict(out.plan);
    d["tokens"] = rows_of(out.tokens);
    d["patch_tokens"] = out.patch_tokens;
    d["queries"] = out.query_count;
    return d;
}

}  // namespace

PYBIND11_MODULE(_th2, m) {
    m.doc() = "Native core: crop planning, position embeddings, compression front-end, box codec, packing, planner";

    // Python subclasses mirror the C++ error taxonomy.
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<SampleTooLargeError>(m, "SampleTooLargeError", PyExc_ValueError);

    m.def(
        "plan_crop",
        [](std::size_t w, std::size_t h, std::size_t max_area, std::size_t max_side, std::size_t tile, bool thumbnail) {
            return plan_to_dict(plan_crop(w, h, crop_config(max_area, max_side, tile, thumbnail)));
        },
        py::arg("width"), py::arg("height"), py::arg("max_area") = 36, py::arg("max_side") = 12, py::arg("tile") = 224,
        py::arg("thumbnail") = true);

    m.def(
        "spe_interpolate",
        [](const std::vector<double>& e0, const std::vector<double>& e1, double t) { return spe_interpolate(e0, e1, t); },
        py::arg("e0"), py::arg("e1"), py::arg("t"));

    m.def(
        "spe_grid",
        [](std::size_t rows, std::size_t cols, std::size_t dim, std::size_t heads, std::uint64_t seed) {
            return rows_of(spe_grid(SpeTable::random(dim, heads, seed), rows, cols));
        },
        py::arg("rows"), py::arg("cols"), py::arg("dim") = 16, py::arg("heads") = 4, py::arg("seed") = 0);

    m.def("rearrange_permutation", &rearrange_permutation, py::arg("rows"), py::arg("cols"), py::arg("grid") = 8);

    m.def(
        "frontend_token_count",
        [](std::size_t w, std::size_t h, bool thumbnail) {
            CropConfig c;
            c.thumbnail = thumbnail;
            return frontend_token_count(plan_crop(w, h, c));
        },
        py::arg("width"), py::arg("height"), py::arg("thumbnail") = true);

    m.def(
        "compress_random",
        [](std::size_t w, std::size_t h, bool thumbnail, std::uint64_t seed) {
            Image img;
            img.width = w;
            img.height = h;
            img.pixels.resize(w * h * 3);
            Rng rng(seed);
            for (double& p : img.pixels) p = rng.uniform();
            return compress_image(img, thumbnail, seed);
        },
        py::arg("width"), py::arg("height"), py::arg("thumbnail") = true, py::arg("seed") = 0);

    m.def(
        "compress_ppm",
        [](const std::string& path, bool thumbnail, std::uint64_t seed) {
            return compress_image(read_ppm(path), thumbnail, seed);
        },
        py::arg("path"), py::arg("thumbnail") = true, py::arg("seed") = 0);

    m.def(
        "encode_box",
        [](const std::array<double, 4>& b, std::size_t bins, TokenId base) {
            return encode_box({b[0], b[1], b[2], b[3]}, CoordVocab{bins, base});
        },
        py::arg("box"), py::arg("bins") = 1000, py::arg("base") = 0);

    m.def(
        "decode_box",
        [](const std::vector<TokenId>& tokens, std::size_t bins, TokenId base) {
            const BBox b = decode_box(tokens, CoordVocab{bins, base});
            return std::array<double, 4>{b.x1, b.y1, b.x2, b.y2};
        },
        py::arg("tokens"), py::arg("bins") = 1000, py::arg("base") = 0);

    m.def(
        "encode_box_digits",
        [](const std::array<double, 4>& b) { return encode_box_digits({b[0], b[1], b[2], b[3]}); }, py::arg("box"));

    m.def(
        "partition",
        [](const std::vector<double>& layers, double vision, std::size_t stages, std::size_t micro) {
            const StagePlan p = partition({vision, layers, stages, micro});
            py::dict d;
            d["boundaries"] = p.boundaries;
            d["layers_per_stage"] = p.layers_per_stage;
            d["stage_costs"] = p.stage_costs;
            d["bottleneck"] = p.bottleneck;
            d["bubble"] = p.bubble;
            d["warmup_activations"] = p.warmup_activations;
            return d;
        },
        py::arg("layer_costs"), py::arg("vision_cost"), py::arg("stages"), py::arg("micro_batches") = 1);

    m.def(
        "bubble_fraction",
        [](const std::vector<double>& stage_costs, std::size_t micro) {
            StagePlan p;
            p.stage_costs = stage_costs;
            for (double c : stage_costs) p.bottleneck = std::max(p.bottleneck, c);
            return bubble_fraction(p, micro);
        },
        py::arg("stage_costs"), py::arg("micro_batches"));

    m.def(
        "pack",
        [](const std::vector<std::tuple<std::string, std::vector<std::int32_t>, std::size_t>>& items, std::size_t context,
           std::size_t max_tiles, std::int32_t pad_id) {
            std::vector<PackItem> in;
            in.reserve(items.size());
            for (const auto& [k, t, n] : items) in.push_back({k, t, n});
            py::list out;
            for (const auto& b : pack(in, PackConfig{context, max_tiles, pad_id})) {
                py::dict d;
                d["keys"] = b.keys;
                d["tokens"] = b.tokens;
                d["segments"] = b.segments;
                d["used"] = b.used;
                d["tiles"] = b.tiles;
                out.append(d);
            }
            return out;
        },
        py::arg("items"), py::arg("context") = 4096, py::arg("max_tiles") = 108, py::arg("pad_id") = 0);
}
