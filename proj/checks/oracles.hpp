#pragma once

// Reference computations used to check the implementation. Each one takes a
// different route from the code it checks: finite differences instead of the
// tape, extended precision instead of float64, enumeration instead of DP.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "th2/crop.hpp"
#include "th2/pipeline.hpp"
#include "th2/planner.hpp"
#include "th2/rng.hpp"
#include "th2/tensor.hpp"

namespace th2::oracle {

struct GradCheck {
    bool passed = true;
    std::size_t checked = 0;
    double worst_ratio = 0.0;  // max |a - n| / (rtol * max(|a|, |n|) + atol)
    std::string worst;         // description of the worst entry
};

/// Compares tape gradients of `loss` against central differences for every
/// entry of `params` (or a seeded sample of `per_param` entries each).
GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params, double rtol,
                          double atol = 1e-9, double step = 1e-5, std::size_t per_param = 0, std::uint64_t seed = 7);

// Random tensor with entries in [lo, hi).
Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false);

// Grid chosen by exhaustive scoring of every admissible (rows, cols).
std::pair<std::size_t, std::size_t> crop_grid_bruteforce(std::size_t width, std::size_t height, const CropConfig& cfg);

// Slerp in 50-digit arithmetic via the rotation form cos(t a) u + sin(t a) v.
std::vector<double> slerp_reference(const std::vector<double>& e0, const std::vector<double>& e1, double t);
// Angle between two vectors, extended precision.
double angle_between(const std::vector<double>& a, const std::vector<double>& b);

// Tile-major indices sorted by (global_row, global_col).
std::vector<std::size_t> rearrange_order_bruteforce(std::size_t rows, std::size_t cols, std::size_t grid);

struct BrutePlan {
    std::vector<std::size_t> boundaries;
    double bottleneck = 0.0;
};
// Enumerates every valid boundary vector.
BrutePlan partition_bruteforce(const StageModel& model);

// Keys per pack under greedy first-fit.
std::vector<std::vector<std::string>> greedy_pack_keys(const std::vector<PackItem>& items, const PackConfig& cfg);

}  // namespace th2::oracle
