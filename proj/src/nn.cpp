#include "gelenet/nn.hpp"

#include <algorithm>
#include <cmath>

namespace gelenet {

void kaiming_normal(Parameter& p, std::size_t fan_in, Rng& rng)
{
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1))));
    for (double& v : p.value.data())
        v = dist(rng);
}

Conv2d::Conv2d(ParameterSet& params, const std::string& name, ConvSpec spec, Rng& rng,
               std::vector<double> kernel_mask)
    : spec_(spec)
{
    const std::size_t k = spec.kernel;
    weight_ = &params.create(name + ".weight", Shape{spec.out, spec.in, k, k});
    std::size_t support = k * k;
    if (!kernel_mask.empty()) {
        if (kernel_mask.size() != k * k)
            throw ShapeError("Conv2d '" + name + "': kernel mask has " + std::to_string(kernel_mask.size()) +
                             " entries, expected " + std::to_string(k * k));
        support = static_cast<std::size_t>(std::count_if(kernel_mask.begin(), kernel_mask.end(),
                                                         [](double m) { return m != 0.0; }));
        std::vector<double> full(weight_->value.size());
        for (std::size_t i = 0; i < full.size(); ++i)
            full[i] = kernel_mask[i % (k * k)];
        mask_ = Tensor(weight_->value.shape(), full);
        weight_->mask = std::move(full);
    }
    kaiming_normal(*weight_, spec.in * support, rng);
    weight_->apply_mask();
    if (spec.bias)
        bias_ = &params.create(name + ".bias", Shape{1, spec.out, 1, 1});
}

Tensor Conv2d::operator()(const Tensor& x) const
{
    const Tensor& w = weight_->value;
    const Tensor bias = bias_ ? bias_->value : Tensor();
    const ops::Conv2dOptions opt{spec_.stride, spec_.padding};
    if (mask_.defined())
        return ops::conv2d(x, ops::mul(w, mask_), bias, opt);
    return ops::conv2d(x, w, bias, opt);
}

} // namespace gelenet
