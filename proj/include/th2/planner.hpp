#pragma once

#include <cstddef>
#include <vector>

namespace th2 {

/// Cost profile of the pipeline: vision encoder + resampler (always in
/// stage 0) followed by the language-model layers. Abstract time units.
struct StageModel {
    double vision_cost = 0.0;
    std::vector<double> layer_costs;
    std::size_t stages = 1;
    std::size_t micro_batches = 1;

    void validate() const;
};

struct StagePlan {
    // Split points over layer indices: stage s holds [boundaries[s-1], boundaries[s]).
    std::vector<std::size_t> boundaries;
    std::vector<std::size_t> layers_per_stage;
    std::vector<double> stage_costs;  // stage 0 includes the vision cost
    double bottleneck = 0.0;
    double bubble = 0.0;
    // In-flight micro-batches each stage holds after a 1F1B warm-up; memory
    // pressure indicator only.
    std::vector<std::size_t> warmup_activations;

    std::size_t stages() const { return stage_costs.size(); }
};

/// Contiguous split minimizing the most expensive stage. Stage 0 may hold no
/// language layers; the others hold at least one. Ties go to the plan with
/// fewer layers in stage 0, then to the lexicographically smallest boundaries.
StagePlan partition(const StageModel& model);

/// Idle fraction of a synchronous pipeline that runs every stage at the
/// bottleneck pace: 1 - M * mean_cost / ((M + P - 1) * bottleneck).
/// Balanced stages reduce it to (P - 1) / (M + P - 1). An estimate.
double bubble_fraction(const StagePlan& plan, std::size_t micro_batches);

}  // namespace th2
