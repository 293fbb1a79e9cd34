#pragma once

#include "gelenet/ops.hpp"
#include "gelenet/parameter.hpp"

#include <random>
#include <string>
#include <vector>

namespace gelenet {

using Rng = std::mt19937_64;

/// Kaiming normal initialization: N(0, 2 / fan_in).
void kaiming_normal(Parameter& p, std::size_t fan_in, Rng& rng);

struct ConvSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
    bool bias = true;
};

/// Padding that keeps spatial size for odd kernels at stride 1.
inline ConvSpec same_conv(std::size_t in, std::size_t out, std::size_t kernel)
{
    return ConvSpec{in, out, kernel, 1, kernel / 2, true};
}

/**
 * Convolution layer owning "<name>.weight" and "<name>.bias" in a ParameterSet.
 *
 * An optional kernel mask (k x k, 0/1) restricts the support of every filter.
 * The mask multiplies the weight inside the forward pass, so masked entries
 * receive exactly zero gradient, and it is also stored on the Parameter so the
 * optimizer re-applies it after each step.
 */
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParameterSet& params, const std::string& name, ConvSpec spec, Rng& rng,
           std::vector<double> kernel_mask = {});

    Tensor operator()(const Tensor& x) const;

    Parameter& weight() const { return *weight_; }
    Parameter* bias() const { return bias_; }
    const ConvSpec& spec() const { return spec_; }

private:
    ConvSpec spec_;
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
    Tensor mask_;
};

} // namespace gelenet
