#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "protohead/tensor.hpp"

namespace protohead {

/// Max relative error between the taped gradient of f at x and central finite
/// differences, maximized over every coordinate of x. f must return a scalar;
/// it may close over other tensors, only x is perturbed. Relative error is
/// |analytic - numeric| / max(1, |numeric|). eps must lie in [1e-7, 1e-3].
///
/// The tape is restored to its prior length before returning, and x's
/// persistent gradient is cleared on entry.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-6);

/// One named case of the finite-difference battery. `run` builds a fresh
/// random instance, checks it, and returns the max relative error.
struct GradCheckCase {
    std::string name;
    double tolerance;
    std::function<double(std::mt19937_64&)> run;
};

/// All registered cases: every differentiable primitive exactly once, then
/// the loss functions and a full two-task training-step composite.
const std::vector<GradCheckCase>& gradcheck_cases();

struct GradCheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Runs every case `trials` times with seeds derived from `seed`, keeping the
/// worst error per case.
std::vector<GradCheckResult> run_gradcheck_battery(int trials, std::uint64_t seed);

/// Battery with a per-op report written to `out`. Returns true when every
/// case stays within tolerance.
bool run_gradcheck_report(std::ostream& out, int trials, std::uint64_t seed);

}  // namespace protohead
