#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace th2 {

/// Interleaved row-major pixel grid (HWC), values nominally in [0, 1].
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c = 3, double fill = 0.0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    bool empty() const { return width == 0 || height == 0 || channels == 0; }
    double& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    double at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

    bool operator==(const Image&) const = default;
};

// Corner-aligned bilinear resampling: output corners land exactly on input
// corners, so resizing to the same size is the identity.
Image resize_bilinear(const Image& src, std::size_t out_w, std::size_t out_h);

// Copies the w x h window at (x0, y0).
Image crop_region(const Image& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

// Binary (P6) or ASCII (P3) portable pixmap, 8-bit.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

}  // namespace th2
