#pragma once

#include <functional>
#include <string>
#include <vector>

namespace regionlm {

// One registered analytic-vs-finite-difference check. run(seed) returns the
// max relative error over every checked parameter.
struct GradCheckCase {
    std::string name;  // module.op
    std::function<double(uint64_t)> run;
    double tolerance = 1e-5;
};

// Every differentiable op in the project, with randomized small-shape
// inputs. Names are prefixed by module: tensor., prompt., vit., decoder.,
// roi.
std::vector<GradCheckCase> gradcheck_registry();

struct GradCheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Runs every case whose name starts with `scope` ("all" runs everything),
// over `seeds` seeded inputs each.
std::vector<GradCheckResult> run_gradchecks(const std::string& scope, int seeds);

}  // namespace regionlm
