#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "th2/image.hpp"

namespace th2 {

struct CropConfig {
    std::size_t tile_px = 224;
    std::size_t max_area = 36;  // 72 during fine-tuning
    std::size_t max_side = 12;
    bool thumbnail = true;

    void validate() const;
    std::size_t max_pixels() const { return max_area * tile_px * tile_px; }
    std::size_t max_long_edge() const { return max_side * tile_px; }
};

struct TileOrigin {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t x = 0;  // pixel origin in the scaled image
    std::size_t y = 0;
};

struct CropPlan {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t scaled_w = 0;
    std::size_t scaled_h = 0;
    std::vector<TileOrigin> tiles;  // row-major
    bool has_thumbnail = false;

    std::size_t tile_count() const { return rows * cols; }
    std::size_t total_tiles() const { return tile_count() + (has_thumbnail ? 1 : 0); }
};

bool grid_admissible(std::size_t rows, std::size_t cols, const CropConfig& cfg);

/// Picks the sub-image grid for a width x height input.
///
/// The ceil-rounded native grid wins whenever it fits the caps. Otherwise
/// every admissible grid is scored by the fraction of source pixels kept when
/// the image is fitted into it without distortion,
///   min(min(cols*tile/width, rows*tile/height)^2, 1),
/// ties going to the grid whose aspect ratio is closest (log scale) to the
/// image's, then to the smaller grid.
CropPlan plan_crop(std::size_t width, std::size_t height, const CropConfig& cfg = {});

struct TiledImage {
    std::vector<Image> tiles;  // row-major, tile_px x tile_px each
    std::optional<Image> thumbnail;

    std::size_t count() const { return tiles.size() + (thumbnail ? 1 : 0); }
};

// Resizes to the plan's scaled size and cuts the grid; the thumbnail is the
// whole image resized to one tile.
TiledImage tile_image(const Image& img, const CropPlan& plan, const CropConfig& cfg = {});

}  // namespace th2
