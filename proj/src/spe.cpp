#include "th2/spe.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "th2/errors.hpp"
#include "th2/rng.hpp"

namespace th2 {

namespace {

double norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace

std::vector<double> spe_interpolate(std::span<const double> e0, std::span<const double> e1, double t) {
    if (e0.size() != e1.size() || e0.empty()) throw DimensionError("slerp endpoints must share a nonzero width");
    if (!(t >= 0.0 && t <= 1.0)) throw InputError("slerp position must lie in [0, 1]");
    const double n0 = norm(e0);
    const double n1 = norm(e1);
    if (n0 == 0.0 || n1 == 0.0) throw InputError("slerp endpoint has zero norm");

    const std::size_t d = e0.size();
    const double s = std::sqrt(static_cast<double>(d));
    std::vector<double> a(d), b(d);
    for (std::size_t i = 0; i < d; ++i) {
        a[i] = s * (e0[i] / n0);
        b[i] = s * (e1[i] / n1);
    }
    // angle from chord lengths; stays accurate near 0 and pi where acos does not
    double diff = 0.0, plus = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        plus += (a[i] + b[i]) * (a[i] + b[i]);
    }
    const double theta = 2.0 * std::atan2(std::sqrt(diff), std::sqrt(plus));

    std::vector<double> out(d);
    if (theta < kSlerpMinAngle) {
        for (std::size_t i = 0; i < d; ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
        const double n = norm(out);
        for (double& x : out) x *= s / n;
        return out;
    }
    if (theta > std::numbers::pi - kSlerpMinAngle) throw InputError("slerp endpoints are antipodal");
    const double sin_theta = std::sin(theta);
    const double wa = std::sin((1.0 - t) * theta) / sin_theta;
    const double wb = std::sin(t * theta) / sin_theta;
    for (std::size_t i = 0; i < d; ++i) out[i] = wa * a[i] + wb * b[i];
    return out;
}

Tensor spe_interpolate(const Tensor& e0, const Tensor& e1, double t) {
    if (e0.rank() != 1 || e0.shape() != e1.shape()) throw DimensionError("slerp endpoints must be equal-length vectors");
    auto v = spe_interpolate(e0.data(), e1.data(), t);
    return Tensor({v.size()}, std::move(v));
}

std::vector<double> spe_interpolate_heads(std::span<const double> e0, std::span<const double> e1,
                                          std::size_t n_heads, double t) {
    if (n_heads == 0 || e0.size() % n_heads || e0.size() != e1.size()) {
        throw DimensionError("embedding width " + std::to_string(e0.size()) + " not divisible into " +
                             std::to_string(n_heads) + " heads");
    }
    const std::size_t dh = e0.size() / n_heads;
    std::vector<double> out;
    out.reserve(e0.size());
    for (std::size_t h = 0; h < n_heads; ++h) {
        auto part = spe_interpolate(e0.subspan(h * dh, dh), e1.subspan(h * dh, dh), t);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

double spe_axis_position(std::size_t i, std::size_t n) {
    if (n == 0 || i >= n) throw InputError("axis index out of range");
    if (n == 1) return 0.5;
    return static_cast<double>(i) / static_cast<double>(n - 1);
}

void SpeTable::validate() const {
    if (dim == 0 || n_heads == 0 || dim % n_heads) throw ConfigError("SPE width must split evenly across heads");
    const Shape want{dim};
    for (const Tensor* e : {&e0_row, &e1_row, &e0_col, &e1_col}) {
        if (e->shape() != want) throw DimensionError("SPE endpoint must have shape " + shape_str(want));
        const std::size_t dh = head_dim();
        for (std::size_t h = 0; h < n_heads; ++h) {
            if (norm(e->data().subspan(h * dh, dh)) == 0.0) throw InputError("SPE endpoint has a zero head slice");
        }
    }
}

SpeTable SpeTable::random(std::size_t dim, std::size_t n_heads, std::uint64_t seed) {
    Rng rng(seed);
    auto draw = [&] {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        return Tensor({dim}, std::move(v));
    };
    SpeTable table{draw(), draw(), draw(), draw(), dim, n_heads};
    table.validate();
    return table;
}

Tensor spe_grid(const SpeTable& table, std::size_t rows, std::size_t cols) {
    table.validate();
    if (rows == 0 || cols == 0) throw InputError("SPE grid needs at least one row and column");
    const std::size_t d = table.dim;
    std::vector<std::vector<double>> row_emb(rows), col_emb(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        row_emb[i] = spe_interpolate_heads(table.e0_row.data(), table.e1_row.data(), table.n_heads,
                                           spe_axis_position(i, rows));
    }
    for (std::size_t j = 0; j < cols; ++j) {
        col_emb[j] = spe_interpolate_heads(table.e0_col.data(), table.e1_col.data(), table.n_heads,
                                           spe_axis_position(j, cols));
    }
    std::vector<double> out(rows * cols * d);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            for (std::size_t k = 0; k < d; ++k) out[(i * cols + j) * d + k] = row_emb[i][k] + col_emb[j][k];
    return Tensor({rows * cols, d}, std::move(out));
}

}  // namespace th2
