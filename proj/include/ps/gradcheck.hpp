#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ps/adam.hpp"
#include "ps/autodiff.hpp"
#include "ps/rng.hpp"

namespace ps {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;
    std::int64_t coords_checked = 0;

    bool pass(double tol) const { return max_rel_err < tol; }
};

/// Builds a scalar objective from leaf nodes aligned with the NamedTensors
/// order. Called repeatedly with fresh leaves.
using GraphBuilder =
    std::function<ag::NodePtr<double>(const std::vector<ag::NodePtr<double>>&)>;

/// Central finite differences against the reverse-mode gradient, in 64-bit.
/// Checks up to `max_coords_per_tensor` coordinates per leaf (all of them
/// when the tensor is small). Relative error is |a - n| / max(1, |a|, |n|).
/// When retry_tol > 0, coordinates that miss it are re-measured at step/8
/// and step/64 and the best reading kept; a perturbation that lands a
/// piecewise-linear activation exactly on its kink is a defect of the
/// probe step, not of the gradient, and shrinking the step resolves it.
GradCheckReport check_gradients(const GraphBuilder& build, const NamedTensors<double>& leaves,
                                double step, std::int64_t max_coords_per_tensor, Rng& rng,
                                double retry_tol = 0.0);

struct GradSuiteEntry {
    std::string name;
    GradCheckReport report;
    double tolerance;
    bool pass;
};

/// The full differentiation battery: every op plus the two-branch network
/// end to end on tiny shapes. Per-op tolerance 1e-4, end-to-end 1e-3.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed);

}  // namespace ps
