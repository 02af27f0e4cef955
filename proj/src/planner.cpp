#include "th2/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "th2/errors.hpp"

namespace th2 {

void StageModel::validate() const {
    if (stages == 0) throw ConfigError("need at least one pipeline stage");
    if (micro_batches == 0) throw ConfigError("need at least one micro-batch");
    if (!std::isfinite(vision_cost) || vision_cost < 0.0) throw ConfigError("vision cost must be finite and >= 0");
    for (double c : layer_costs) {
        if (!std::isfinite(c) || c <= 0.0) throw ConfigError("layer costs must be positive and finite");
    }
    if (layer_costs.size() + 1 < stages) {
        throw ConfigError(std::to_string(layer_costs.size()) + " layers cannot fill " + std::to_string(stages - 1) +
                          " non-vision stages");
    }
}

StagePlan partition(const StageModel& model) {
    model.validate();
    const std::size_t n = model.layer_costs.size();
    const std::size_t P = model.stages;
    std::vector<double> prefix(n + 1, 0.0);
    std::partial_sum(model.layer_costs.begin(), model.layer_costs.end(), prefix.begin() + 1);
    auto span_cost = [&](std::size_t i, std::size_t j) { return prefix[j] - prefix[i]; };
    constexpr double kInf = std::numeric_limits<double>::infinity();

    // best[m][i]: least bottleneck splitting layers [i, n) into m non-empty runs
    std::vector<std::vector<double>> best(P, std::vector<double>(n + 1, kInf));
    if (P > 1) {
        for (std::size_t i = 0; i < n; ++i) best[1][i] = span_cost(i, n);
        for (std::size_t m = 2; m < P; ++m)
            for (std::size_t i = 0; i + m <= n; ++i)
                for (std::size_t j = i + 1; j + (m - 1) <= n; ++j)
                    best[m][i] = std::min(best[m][i], std::max(span_cost(i, j), best[m - 1][j]));
    }

    auto with_stage0 = [&](std::size_t k0) {
        const double head = model.vision_cost + span_cost(0, k0);
        return P == 1 ? head : std::max(head, best[P - 1][k0]);
    };
    const std::size_t k0_max = P == 1 ? n : n - (P - 1);
    const std::size_t k0_min = P == 1 ? n : 0;
    double optimum = kInf;
    for (std::size_t k0 = k0_min; k0 <= k0_max; ++k0) optimum = std::min(optimum, with_stage0(k0));
    std::size_t k0 = k0_min;
    while (with_stage0(k0) > optimum) ++k0;

    StagePlan plan;
    std::size_t start = k0;
    if (P > 1) plan.boundaries.push_back(k0);
    for (std::size_t remaining = P - 1; remaining > 1; --remaining) {
        std::size_t j = start + 1;
        while (span_cost(start, j) > optimum || best[remaining - 1][j] > optimum) ++j;
        plan.boundaries.push_back(j);
        start = j;
    }

    std::size_t lo = 0;
    for (std::size_t s = 0; s < P; ++s) {
        const std::size_t hi = s + 1 < P ? plan.boundaries[s] : n;
        plan.layers_per_stage.push_back(hi - lo);
        plan.stage_costs.push_back(span_cost(lo, hi) + (s == 0 ? model.vision_cost : 0.0));
        plan.warmup_activations.push_back(std::min(P - s, model.micro_batches));
        lo = hi;
    }
    plan.bottleneck = *std::max_element(plan.stage_costs.begin(), plan.stage_costs.end());
    plan.bubble = bubble_fraction(plan, model.micro_batches);
    return plan;
}

double bubble_fraction(const StagePlan& plan, std::size_t micro_batches) {
    if (micro_batches == 0) throw ConfigError("need at least one micro-batch");
    const std::size_t P = plan.stages();
    if (P <= 1 || plan.bottleneck <= 0.0) return 0.0;
    const double mean = std::accumulate(plan.stage_costs.begin(), plan.stage_costs.end(), 0.0) / static_cast<double>(P);
    const double M = static_cast<double>(micro_batches);
    return 1.0 - M * mean / ((M + static_cast<double>(P) - 1.0) * plan.bottleneck);
}

}  // namespace th2
