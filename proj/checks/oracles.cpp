#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace th2::oracle {

using Big = boost::multiprecision::cpp_bin_float_50;

GradCheck check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> params, double rtol, double atol,
                          double step, std::size_t per_param, std::uint64_t seed) {
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    backward(loss());
    std::vector<std::vector<double>> analytic;
    for (const auto& p : params) analytic.push_back(p.grad());

    Rng rng(seed);
    GradCheck result;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = params[k];
        std::vector<std::size_t> entries;
        if (per_param == 0 || per_param >= p.numel()) {
            for (std::size_t i = 0; i < p.numel(); ++i) entries.push_back(i);
        } else {
            for (std::size_t i = 0; i < per_param; ++i) entries.push_back(rng.below(p.numel()));
        }
        for (std::size_t i : entries) {
            auto data = p.mutable_data();
            const double saved = data[i];
            data[i] = saved + step;
            const double up = loss().item();
            data[i] = saved - step;
            const double down = loss().item();
            data[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k][i];
            const double ratio = std::fabs(a - numeric) / (rtol * std::max(std::fabs(a), std::fabs(numeric)) + atol);
            ++result.checked;
            if (ratio > result.worst_ratio) {
                result.worst_ratio = ratio;
                std::ostringstream os;
                os << "param " << k << " entry " << i << ": analytic " << a << " vs numeric " << numeric;
                result.worst = os.str();
            }
        }
    }
    result.passed = result.worst_ratio <= 1.0;
    for (auto& p : params) p.set_requires_grad(false);
    return result;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::pair<std::size_t, std::size_t> crop_grid_bruteforce(std::size_t width, std::size_t height, const CropConfig& cfg) {
    const std::size_t t = cfg.tile_px;
    const std::size_t native_r = (height + t - 1) / t, native_c = (width + t - 1) / t;
    if (native_r <= cfg.max_side && native_c <= cfg.max_side && native_r * native_c <= cfg.max_area) {
        return {native_r, native_c};
    }
    // (-retained, aspect gap, area) ascending
    std::vector<std::tuple<double, double, std::size_t, std::size_t, std::size_t>> all;
    for (std::size_t r = 1; r <= cfg.max_side; ++r)
        for (std::size_t c = 1; c <= cfg.max_side; ++c) {
            if (r * c > cfg.max_area) continue;
            const double sx = double(c * t) / double(width), sy = double(r * t) / double(height);
            const double s = sx < sy ? sx : sy;
            const double retained = s * s > 1.0 ? 1.0 : s * s;
            const double gap = std::fabs(std::log(double(c) * double(height) / (double(r) * double(width))));
            all.emplace_back(-retained, gap, r * c, r, c);
        }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        // aspect gaps within rounding of each other count as tied
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        if (std::fabs(std::get<1>(a) - std::get<1>(b)) > 1e-12) return std::get<1>(a) < std::get<1>(b);
        return std::get<2>(a) < std::get<2>(b);
    });
    return {std::get<3>(all.front()), std::get<4>(all.front())};
}

std::vector<double> slerp_reference(const std::vector<double>& e0, const std::vector<double>& e1, double t) {
    const std::size_t d = e0.size();
    std::vector<Big> a(d), b(d);
    Big na = 0, nb = 0;
    for (std::size_t i = 0; i < d; ++i) {
        na += Big(e0[i]) * e0[i];
        nb += Big(e1[i]) * e1[i];
    }
    na = sqrt(na);
    nb = sqrt(nb);
    for (std::size_t i = 0; i < d; ++i) {
        a[i] = Big(e0[i]) / na;
        b[i] = Big(e1[i]) / nb;
    }
    Big dot = 0;
    for (std::size_t i = 0; i < d; ++i) dot += a[i] * b[i];
    // v: unit vector in the plane, orthogonal to a
    std::vector<Big> v(d);
    Big nv = 0;
    for (std::size_t i = 0; i < d; ++i) {
        v[i] = b[i] - dot * a[i];
        nv += v[i] * v[i];
    }
    nv = sqrt(nv);
    const Big angle = atan2(nv, dot);
    const Big scale = sqrt(Big(d));
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        const Big vi = nv == 0 ? Big(0) : v[i] / nv;
        out[i] = static_cast<double>(scale * (cos(Big(t) * angle) * a[i] + sin(Big(t) * angle) * vi));
    }
    return out;
}

double angle_between(const std::vector<double>& a, const std::vector<double>& b) {
    Big na = 0, nb = 0, dot = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += Big(a[i]) * a[i];
        nb += Big(b[i]) * b[i];
        dot += Big(a[i]) * b[i];
    }
    na = sqrt(na);
    nb = sqrt(nb);
    Big perp = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Big r = Big(b[i]) / nb - (dot / (na * nb)) * (Big(a[i]) / na);
        perp += r * r;
    }
    return static_cast<double>(atan2(sqrt(perp), dot / (na * nb)));
}

std::vector<std::size_t> rearrange_order_bruteforce(std::size_t rows, std::size_t cols, std::size_t grid) {
    std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> keyed;  // (global row, global col, index)
    std::size_t index = 0;
    for (std::size_t a = 0; a < rows; ++a)
        for (std::size_t b = 0; b < cols; ++b)
            for (std::size_t y = 0; y < grid; ++y)
                for (std::size_t x = 0; x < grid; ++x) keyed.emplace_back(a * grid + y, b * grid + x, index++);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> order;
    for (const auto& k : keyed) order.push_back(std::get<2>(k));
    return order;
}

namespace {

void enumerate_boundaries(std::size_t n, std::size_t P, std::vector<std::size_t>& current,
                          const std::function<void(const std::vector<std::size_t>&)>& visit) {
    if (current.size() == P - 1) {
        // stages 1..P-1 must be non-empty
        const std::size_t last = current.empty() ? 0 : current.back();
        if (P == 1 || last < n) visit(current);
        return;
    }
    const std::size_t lo = current.empty() ? 0 : current.back() + 1;
    for (std::size_t b = lo; b <= n; ++b) {
        current.push_back(b);
        enumerate_boundaries(n, P, current, visit);
        current.pop_back();
    }
}

}  // namespace

BrutePlan partition_bruteforce(const StageModel& model) {
    const std::size_t n = model.layer_costs.size();
    BrutePlan best;
    best.bottleneck = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> current;
    enumerate_boundaries(n, model.stages, current, [&](const std::vector<std::size_t>& bounds) {
        double worst = 0.0;
        std::size_t lo = 0;
        for (std::size_t s = 0; s < model.stages; ++s) {
            const std::size_t hi = s + 1 < model.stages ? bounds[s] : n;
            double cost = s == 0 ? model.vision_cost : 0.0;
            for (std::size_t i = lo; i < hi; ++i) cost += model.layer_costs[i];
            worst = std::max(worst, cost);
            lo = hi;
        }
        const double tol = 1e-9 * std::max(1.0, best.bottleneck == std::numeric_limits<double>::infinity() ? 1.0 : best.bottleneck);
        // enumeration order is lexicographic, so the first optimum found
        // already has the fewest stage-0 layers and smallest boundaries
        if (worst < best.bottleneck - tol) best = {bounds, worst};
    });
    return best;
}

std::vector<std::vector<std::string>> greedy_pack_keys(const std::vector<PackItem>& items, const PackConfig& cfg) {
    std::vector<std::vector<std::string>> packs;
    std::size_t tokens = 0, tiles = 0;
    for (const auto& it : items) {
        const bool fits = !packs.empty() && tokens + it.tokens.size() <= cfg.context && tiles + it.tiles <= cfg.max_tiles;
        if (!fits) {
            packs.emplace_back();
            tokens = tiles = 0;
        }
        packs.back().push_back(it.key);
        tokens += it.tokens.size();
        tiles += it.tiles;
    }
    return packs;
}

}  // namespace th2::oracle
