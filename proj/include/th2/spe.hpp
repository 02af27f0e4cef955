#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "th2/tensor.hpp"

namespace th2 {

// Below this angle the endpoints count as collinear and we blend linearly.
inline constexpr double kSlerpMinAngle = 1e-7;

/// Spherical interpolation between two endpoint embeddings of one head.
///
/// Both endpoints are normalized and rescaled to sqrt(width) before the
/// great-circle blend, so every result has norm sqrt(width).
std::vector<double> spe_interpolate(std::span<const double> e0, std::span<const double> e1, double t);
Tensor spe_interpolate(const Tensor& e0, const Tensor& e1, double t);

// Same, applied head by head over a full embedding of n_heads equal slices.
std::vector<double> spe_interpolate_heads(std::span<const double> e0, std::span<const double> e1,
                                          std::size_t n_heads, double t);

// Fractional position of index i on an axis of n cells; 0.5 when n == 1.
double spe_axis_position(std::size_t i, std::size_t n);

/// Learned endpoints for the factorized (row + column) embedding.
struct SpeTable {
    Tensor e0_row, e1_row, e0_col, e1_col;
    std::size_t dim = 0;
    std::size_t n_heads = 1;

    std::size_t head_dim() const { return dim / n_heads; }
    void validate() const;

    // Gaussian endpoints; deterministic in the seed.
    static SpeTable random(std::size_t dim, std::size_t n_heads, std::uint64_t seed);
};

// Row-major [rows*cols, dim] grid: cell (i, j) = row(i) + col(j).
Tensor spe_grid(const SpeTable& table, std::size_t rows, std::size_t cols);

}  // namespace th2
