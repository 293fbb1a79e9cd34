#include "gelenet/optim.hpp"

#include <cmath>

namespace gelenet {

void adam_step(ParameterSet& params, const AdamOptions& o)
{
    for (auto& p : params) {
        if (p->trainable && !p->value.has_grad())
            throw AutodiffError("adam_step: parameter '" + p->name + "' has no gradient; run backward() first");
    }
    for (auto& p : params) {
        if (!p->trainable) {
            p->value.clear_grad();
            continue;
        }
        ++p->step_count;
        const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(p->step_count));
        const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(p->step_count));
        auto w = p->value.data();
        auto g = p->value.grad();
        auto m = p->m.data();
        auto v = p->v.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
            v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
        }
        p->value.clear_grad();
        p->apply_mask();
    }
}

double step_decay_lr(double base_lr, double factor, int period, int epoch)
{
    if (period <= 0)
        return base_lr;
    return base_lr * std::pow(factor, epoch / period);
}

} // namespace gelenet
