#pragma once

#include "gelenet/parameter.hpp"

namespace gelenet {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update over every trainable parameter, then drops
/// the gradient buffers and re-applies structural masks.
/// Throws AutodiffError if a trainable parameter has no gradient.
void adam_step(ParameterSet& params, const AdamOptions& options);

/// Multiplicative step decay: lr = base * factor^(epoch / period).
double step_decay_lr(double base_lr, double factor, int period, int epoch);

} // namespace gelenet
