#include "gelenet/module_checks.hpp"

#include "gelenet/model.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace gelenet {

namespace {

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(s);
    for (double& v : t.data())
        v = u(rng);
    return t;
}

void perturb(ParameterSet& params, Rng& rng)
{
    std::normal_distribution<double> n(0.0, 0.2);
    for (auto& p : params) {
        for (double& v : p->value.data())
            v += n(rng);
        p->apply_mask();
    }
}

std::vector<GradCheckTarget> parameter_targets(ParameterSet& params)
{
    std::vector<GradCheckTarget> t;
    for (auto& p : params) {
        p->value.set_requires_grad(true);
        t.push_back({p->name, p->value});
    }
    return t;
}

// Fixed random projection weights scaled by 1/sqrt(numel), which keeps the probed loss O(1)
// and with it the rounding noise of the central differences near 1e-11.
Tensor probe_weights(Shape s, Rng& rng)
{
    Tensor w = random_tensor(s, rng);
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.size()));
    for (double& v : w.data())
        v *= scale;
    return w;
}

Tensor probe(const Tensor& out, const Tensor& weights) { return ops::sum(ops::mul(out, weights)); }

} // namespace

ModuleCheck check_module(const std::string& module, const GradCheckOptions& options)
{
    const auto start = std::chrono::steady_clock::now();
    Rng rng(options.seed + 1000);
    ParameterSet params;
    std::vector<GradCheckTarget> targets;
    std::function<Tensor()> loss;
    constexpr std::size_t c = kPyramidChannels;

    if (module == "backbone") {
        BackboneConfig cfg{32, {8, 8, 8, 8}};
        auto bb = std::make_shared<Backbone>(params, cfg, rng);
        perturb(params, rng);
        Tensor x = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
        auto weights = std::make_shared<std::array<Tensor, 4>>();
        const FeaturePyramid shapes = (*bb)(x);
        (*weights)[0] = probe_weights(shapes.f1.shape(), rng);
        (*weights)[1] = probe_weights(shapes.f2.shape(), rng);
        (*weights)[2] = probe_weights(shapes.f3.shape(), rng);
        (*weights)[3] = probe_weights(shapes.f4.shape(), rng);
        targets = parameter_targets(params);
        x.set_requires_grad(true);
        targets.push_back({"input", x});
        loss = [bb, x, weights] {
            const FeaturePyramid p = (*bb)(x);
            const auto& w = *weights;
            return ops::add(ops::add(probe(p.f1, w[0]), probe(p.f2, w[1])),
                            ops::add(probe(p.f3, w[2]), probe(p.f4, w[3])));
        };
    } else if (module == "dswsam" || module == "swsam") {
        const bool directional = module == "dswsam";
        const std::size_t size = directional ? 16 : 8;
        auto m = std::make_shared<Swsam>(params, module, c, directional, AttentionVariant::full, rng);
        perturb(params, rng);
        Tensor x = random_tensor({2, c, size, size}, rng);
        const Tensor w = probe_weights({2, c, size, size}, rng);
        targets = parameter_targets(params);
        x.set_requires_grad(true);
        targets.push_back({"input", x});
        loss = [m, x, w] { return probe((*m)(x), w); };
    } else if (module == "ktm") {
        auto m = std::make_shared<Ktm>(params, "ktm", c, KtmMode::full, rng);
        perturb(params, rng);
        Tensor f2 = random_tensor({2, c, 4, 4}, rng);
        Tensor f3 = random_tensor({2, c, 4, 4}, rng);
        const Tensor w = probe_weights({2, c, 4, 4}, rng);
        targets = parameter_targets(params);
        f2.set_requires_grad(true);
        f3.set_requires_grad(true);
        targets.push_back({"f2", f2});
        targets.push_back({"f3", f3});
        loss = [m, f2, f3, w] { return probe((*m)(f2, f3), w); };
    } else if (module == "predictor") {
        auto m = std::make_shared<PartialDecoder>(params, "decoder", c, rng);
        perturb(params, rng);
        Tensor low = random_tensor({2, c, 16, 16}, rng);
        Tensor mid = random_tensor({2, c, 4, 4}, rng);
        Tensor high = random_tensor({2, c, 2, 2}, rng);
        const Tensor w = probe_weights({2, 1, 64, 64}, rng);
        targets = parameter_targets(params);
        for (auto* t : {&low, &mid, &high})
            t->set_requires_grad(true);
        targets.push_back({"f_dswsa", low});
        targets.push_back({"f_ktm", mid});
        targets.push_back({"f_swsa", high});
        loss = [m, low, mid, high, w] { return probe(finalize_saliency((*m)(low, mid, high)), w); };
    } else if (module == "loss") {
        Tensor s = random_tensor({2, 1, 16, 16}, rng, 0.05, 0.95);
        Tensor g = random_tensor({2, 1, 16, 16}, rng, 0.0, 1.0);
        for (double& v : g.data())
            v = v < 0.4 ? 1.0 : 0.0;
        s.set_requires_grad(true);
        targets.push_back({"saliency", s});
        loss = [s, g] { return hybrid_loss(s, g); };
    } else {
        throw std::invalid_argument("unknown module '" + module + "' for gradient checking");
    }

    ModuleCheck out;
    out.module = module;
    out.result = check_gradients(loss, std::move(targets), options);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

std::vector<ModuleCheck> check_all_modules(const GradCheckOptions& options)
{
    std::vector<ModuleCheck> out;
    for (const std::string& m : kCheckedModules)
        out.push_back(check_module(m, options));
    return out;
}

} // namespace gelenet
