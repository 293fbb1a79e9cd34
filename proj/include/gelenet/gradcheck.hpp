#pragma once

#include "gelenet/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gelenet {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-3;
    /// Coordinates sampled per target; targets smaller than this are checked exhaustively.
    std::size_t samples_per_target = 20;
    /// Denominator floor of the relative error, below the finite-difference noise level.
    double magnitude_floor = 1e-6;
    std::uint64_t seed = 0;
};

struct GradCheckTarget {
    std::string name;
    Tensor tensor;
};

struct GradCheckSample {
    std::string target;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckResult {
    std::vector<GradCheckSample> samples;
    double max_rel_error = 0.0;
    std::string worst_target;
    bool passed = true;
};

/// |a - n| / max(|a|, |n|, floor)
double gradient_relative_error(double analytic, double numeric, double floor);

/**
 * Compares reverse-mode gradients against central finite differences.
 *
 * `loss_fn` must rebuild the scalar loss from the current values of the
 * targets on every call. It is invoked once under a fresh tape for the
 * analytic pass and twice per sampled coordinate without a tape.
 */
GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<GradCheckTarget> targets,
                                const GradCheckOptions& options = {});

} // namespace gelenet
