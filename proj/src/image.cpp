#include "th2/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>

#include "th2/errors.hpp"

namespace th2 {

namespace {

// Source coordinate for output index i under corner alignment.
double source_coord(std::size_t i, std::size_t out_n, std::size_t in_n) {
    if (out_n == 1) return 0.5 * static_cast<double>(in_n - 1);
    return static_cast<double>(i) * static_cast<double>(in_n - 1) / static_cast<double>(out_n - 1);
}

}  // namespace

Image resize_bilinear(const Image& src, std::size_t out_w, std::size_t out_h) {
    if (src.empty()) throw InputError("resize of empty image");
    if (out_w == 0 || out_h == 0) throw InputError("resize to empty size");
    Image out(out_w, out_h, src.channels);
    for (std::size_t y = 0; y < out_h; ++y) {
        const double sy = source_coord(y, out_h, src.height);
        const auto y0 = static_cast<std::size_t>(std::floor(sy));
        const std::size_t y1 = std::min(y0 + 1, src.height - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = source_coord(x, out_w, src.width);
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const std::size_t x1 = std::min(x0 + 1, src.width - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t c = 0; c < src.channels; ++c) {
                // exact-grid samples skip the blend so identity resizes are bit-exact
                double top = fx == 0.0 ? src.at(x0, y0, c) : (1 - fx) * src.at(x0, y0, c) + fx * src.at(x1, y0, c);
                double bot = fx == 0.0 ? src.at(x0, y1, c) : (1 - fx) * src.at(x0, y1, c) + fx * src.at(x1, y1, c);
                out.at(x, y, c) = fy == 0.0 ? top : (1 - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

Image crop_region(const Image& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
    if (x0 + w > src.width || y0 + h > src.height) throw InputError("crop window outside image");
    Image out(w, h, src.channels);
    for (std::size_t y = 0; y < h; ++y) {
        const auto row = src.pixels.begin() + static_cast<std::ptrdiff_t>(((y0 + y) * src.width + x0) * src.channels);
        std::copy_n(row, w * src.channels, out.pixels.begin() + static_cast<std::ptrdiff_t>(y * w * src.channels));
    }
    return out;
}

namespace {

void skip_ws_and_comments(std::istream& in) {
    while (true) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in.get();
        } else {
            return;
        }
    }
}

std::size_t read_header_int(std::istream& in, const std::string& path) {
    skip_ws_and_comments(in);
    long long v = -1;
    if (!(in >> v) || v <= 0) throw InputError("bad PPM header in " + path);
    return static_cast<std::size_t>(v);
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P6" && magic != "P3") throw InputError(path + " is not a P3/P6 pixmap");
    const std::size_t w = read_header_int(in, path);
    const std::size_t h = read_header_int(in, path);
    const std::size_t maxval = read_header_int(in, path);
    if (maxval > 255) throw InputError("16-bit PPM not supported: " + path);
    Image img(w, h, 3);
    if (magic == "P6") {
        in.get();  // single whitespace after maxval
        std::vector<unsigned char> raw(w * h * 3);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw InputError("truncated PPM " + path);
        for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / static_cast<double>(maxval);
    } else {
        for (double& px : img.pixels) {
            int v = -1;
            if (!(in >> v) || v < 0) throw InputError("truncated PPM " + path);
            px = v / static_cast<double>(maxval);
        }
    }
    return img;
}

void write_ppm(const Image& img, const std::string& path) {
    if (img.channels != 3) throw InputError("write_ppm needs 3 channels");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    for (double v : img.pixels) {
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
}

}  // namespace th2
