#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace th2::acceptance {

struct Outcome {
    bool passed = false;
    std::string detail;
};

struct Criterion {
    int id = 0;
    std::string name;
    double time_limit_s = 0.0;
    std::function<Outcome()> run;
};

struct Result {
    int id = 0;
    std::string name;
    bool passed = false;  // property held and finished inside the time limit
    double seconds = 0.0;
    double time_limit_s = 0.0;
    std::string detail;
};

const std::vector<Criterion>& criteria();

// Runs one criterion, timing it and converting exceptions into failures.
Result run(const Criterion& c);

// "PASS  3 coordinate tokens (0.012 s / 1 s): ..."
std::string format(const Result& r);

}  // namespace th2::acceptance
