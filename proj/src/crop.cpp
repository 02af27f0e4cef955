#include "th2/crop.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "th2/errors.hpp"

namespace th2 {

void CropConfig::validate() const {
    if (tile_px == 0) throw ConfigError("tile_px must be positive");
    if (max_side == 0 || max_area == 0) throw ConfigError("grid caps must be positive");
    if (max_side > max_area) throw ConfigError("max_side exceeds max_area");
}

bool grid_admissible(std::size_t rows, std::size_t cols, const CropConfig& cfg) {
    return rows >= 1 && cols >= 1 && rows <= cfg.max_side && cols <= cfg.max_side && rows * cols <= cfg.max_area;
}

namespace {

CropPlan make_plan(std::size_t rows, std::size_t cols, const CropConfig& cfg) {
    CropPlan plan;
    plan.rows = rows;
    plan.cols = cols;
    plan.scaled_w = cols * cfg.tile_px;
    plan.scaled_h = rows * cfg.tile_px;
    plan.has_thumbnail = cfg.thumbnail;
    plan.tiles.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) plan.tiles.push_back({r, c, c * cfg.tile_px, r * cfg.tile_px});
    return plan;
}

}  // namespace

CropPlan plan_crop(std::size_t width, std::size_t height, const CropConfig& cfg) {
    cfg.validate();
    if (width == 0 || height == 0) throw InputError("image dimensions must be positive");
    const std::size_t tile = cfg.tile_px;
    const std::size_t ideal_rows = (height + tile - 1) / tile;
    const std::size_t ideal_cols = (width + tile - 1) / tile;
    if (grid_admissible(ideal_rows, ideal_cols, cfg)) return make_plan(ideal_rows, ideal_cols, cfg);

    const double w = static_cast<double>(width);
    const double h = static_cast<double>(height);
    struct Best {
        double retained = -1.0;
        double aspect_gap = 0.0;
        std::size_t area = 0;
        std::size_t rows = 0, cols = 0;
    } best;
    for (std::size_t r = 1; r <= cfg.max_side; ++r) {
        for (std::size_t c = 1; c <= cfg.max_side && r * c <= cfg.max_area; ++c) {
            const double fit = std::min(static_cast<double>(c * tile) / w, static_cast<double>(r * tile) / h);
            const double retained = std::min(fit * fit, 1.0);
            const double gap = std::fabs(std::log((static_cast<double>(c) / r) * (h / w)));
            const bool better = retained > best.retained ||
                                (retained == best.retained &&
                                 (gap < best.aspect_gap || (gap == best.aspect_gap && r * c < best.area)));
            if (better) best = {retained, gap, r * c, r, c};
        }
    }
    return make_plan(best.rows, best.cols, cfg);
}

TiledImage tile_image(const Image& img, const CropPlan& plan, const CropConfig& cfg) {
    if (img.empty()) throw InputError("cannot tile an empty image");
    if (plan.scaled_w != plan.cols * cfg.tile_px || plan.scaled_h != plan.rows * cfg.tile_px ||
        plan.tiles.size() != plan.rows * plan.cols) {
        throw ConfigError("crop plan does not match tile size " + std::to_string(cfg.tile_px));
    }
    const Image scaled = resize_bilinear(img, plan.scaled_w, plan.scaled_h);
    TiledImage out;
    out.tiles.reserve(plan.tiles.size());
    for (const auto& t : plan.tiles) out.tiles.push_back(crop_region(scaled, t.x, t.y, cfg.tile_px, cfg.tile_px));
    if (plan.has_thumbnail) out.thumbnail = resize_bilinear(img, cfg.tile_px, cfg.tile_px);
    return out;
}

}  // namespace th2
