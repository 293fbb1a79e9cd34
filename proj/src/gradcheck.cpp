#include "gelenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gelenet {

double gradient_relative_error(double analytic, double numeric, double floor)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<GradCheckTarget> targets,
                                const GradCheckOptions& options)
{
    std::vector<bool> previous_flags;
    for (auto& t : targets) {
        previous_flags.push_back(t.tensor.requires_grad());
        t.tensor.set_requires_grad(true);
        t.tensor.clear_grad();
    }

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tape::Scope scope(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
    }
    for (auto& t : targets) {
        if (t.tensor.has_grad())
            analytic.emplace_back(t.tensor.grad().begin(), t.tensor.grad().end());
        else
            analytic.emplace_back(t.tensor.size(), 0.0);
    }

    GradCheckResult result;
    std::mt19937_64 rng(options.seed);
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        auto& t = targets[ti];
        const std::size_t n = t.tensor.size();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (n > options.samples_per_target) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.samples_per_target);
            std::sort(coords.begin(), coords.end());
        }
        auto values = t.tensor.data();
        for (std::size_t idx : coords) {
            const double original = values[idx];
            values[idx] = original + options.step;
            const double up = loss_fn().item();
            values[idx] = original - options.step;
            const double down = loss_fn().item();
            values[idx] = original;
            const double numeric = (up - down) / (2.0 * options.step);
            GradCheckSample s{t.name, idx, analytic[ti][idx], numeric,
                              gradient_relative_error(analytic[ti][idx], numeric, options.magnitude_floor)};
            if (!std::isfinite(s.analytic) || !std::isfinite(s.numeric))
                s.rel_error = std::numeric_limits<double>::infinity();
            if (s.rel_error >= result.max_rel_error) {
                result.max_rel_error = s.rel_error;
                result.worst_target = t.name;
            }
            if (!(s.rel_error < options.tolerance))
                result.passed = false;
            result.samples.push_back(s);
        }
    }

    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        targets[ti].tensor.clear_grad();
        targets[ti].tensor.set_requires_grad(previous_flags[ti]);
    }
    return result;
}

} // namespace gelenet
