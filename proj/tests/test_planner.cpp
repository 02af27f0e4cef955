#include "doctest.h"
#include "oracles.hpp"
#include "th2/errors.hpp"
#include "th2/planner.hpp"

using namespace th2;

TEST_CASE("equal layers split evenly without vision cost") {
    const auto p = partition({0.0, {1, 1, 1, 1}, 2, 4});
    CHECK(p.layers_per_stage == std::vector<std::size_t>{2, 2});
    CHECK(p.boundaries == std::vector<std::size_t>{2});
    CHECK(p.bottleneck == 2.0);
}

TEST_CASE("vision cost pushes layers out of stage 0") {
    const auto p = partition({1.0, {1, 1, 1}, 2, 4});
    CHECK(p.layers_per_stage == std::vector<std::size_t>{1, 2});
    CHECK(p.stage_costs == std::vector<double>{2.0, 2.0});
}

TEST_CASE("stage 0 may hold no language layers") {
    const auto p = partition({10.0, {1, 1, 1}, 3, 2});
    CHECK(p.layers_per_stage[0] == 0);
    CHECK(p.stage_costs[0] == 10.0);
    CHECK(p.bottleneck == 10.0);
}

TEST_CASE("ties prefer the smaller stage 0, then smaller boundaries") {
    // every split has bottleneck 5 when the vision cost alone is 5
    const auto p = partition({5.0, {1, 1, 1}, 3, 1});
    CHECK(p.boundaries == std::vector<std::size_t>{0, 1});
}

TEST_CASE("single stage keeps everything") {
    const auto p = partition({2.0, {1, 2, 3}, 1, 8});
    CHECK(p.boundaries.empty());
    CHECK(p.stage_costs == std::vector<double>{8.0});
    CHECK(p.bubble == 0.0);
    CHECK(p.warmup_activations == std::vector<std::size_t>{1});
}

TEST_CASE("matches exhaustive search") {
    Rng rng(1);
    for (int i = 0; i < 300; ++i) {
        StageModel m;
        const std::size_t n = 1 + rng.below(12);
        m.stages = 1 + rng.below(std::min<std::size_t>(4, n + 1));
        for (std::size_t k = 0; k < n; ++k) m.layer_costs.push_back(i % 3 ? rng.uniform(0.5, 4.0) : double(1 + rng.below(3)));
        m.vision_cost = i % 3 ? rng.uniform(0.0, 6.0) : double(rng.below(5));
        const auto p = partition(m);
        const auto b = oracle::partition_bruteforce(m);
        CHECK(p.boundaries == b.boundaries);
        CHECK(p.bottleneck == doctest::Approx(b.bottleneck).epsilon(1e-12));
    }
}

TEST_CASE("a costlier vision stage never gains layers") {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        StageModel m;
        const std::size_t n = 2 + rng.below(10);
        m.stages = 2 + rng.below(std::min<std::size_t>(3, n));
        for (std::size_t k = 0; k < n; ++k) m.layer_costs.push_back(rng.uniform(0.5, 3.0));
        m.vision_cost = rng.uniform(0.0, 2.0);
        const std::size_t before = partition(m).layers_per_stage[0];
        m.vision_cost += rng.uniform(1e-6, 3.0);
        CHECK(partition(m).layers_per_stage[0] <= before);
    }
}

TEST_CASE("bubble fraction") {
    StagePlan balanced;
    balanced.stage_costs = {1.0, 1.0};
    balanced.bottleneck = 1.0;
    CHECK(bubble_fraction(balanced, 1) == doctest::Approx(0.5));
    CHECK(bubble_fraction(balanced, 7) == doctest::Approx(1.0 / 8.0));

    StagePlan single;
    single.stage_costs = {3.0};
    single.bottleneck = 3.0;
    CHECK(bubble_fraction(single, 4) == 0.0);
    CHECK_THROWS_AS(bubble_fraction(balanced, 0), ConfigError);

    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        StageModel m{rng.uniform(0.0, 3.0), {}, 2 + rng.below(3), 1};
        for (std::size_t k = 0; k < 10; ++k) m.layer_costs.push_back(rng.uniform(0.1, 3.0));
        const auto p = partition(m);
        double prev = 1.0;
        for (std::size_t mb = 1; mb <= 32; ++mb) {
            const double b = bubble_fraction(p, mb);
            CHECK(b >= 0.0);
            CHECK(b < prev);
            prev = b;
        }
    }
}

TEST_CASE("warm-up activations shrink toward the last stage") {
    const auto p = partition({1.0, {1, 1, 1, 1, 1, 1, 1}, 4, 3});
    CHECK(p.warmup_activations == std::vector<std::size_t>{3, 3, 2, 1});
}

TEST_CASE("invalid models") {
    CHECK_THROWS_AS(partition({0.0, {1, 1}, 4, 1}), ConfigError);
    CHECK_THROWS_AS(partition({0.0, {1, -1}, 2, 1}), ConfigError);
    CHECK_THROWS_AS(partition({0.0, {1, 1}, 0, 1}), ConfigError);
    CHECK_THROWS_AS(partition({0.0, {1, 1}, 2, 0}), ConfigError);
    CHECK_THROWS_AS(partition({-1.0, {1, 1}, 2, 1}), ConfigError);
}
