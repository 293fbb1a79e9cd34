#pragma once

#include "gelenet/gradcheck.hpp"
#include "gelenet/ops.hpp"
#include "gelenet/parameter.hpp"
#include "gelenet/tensor.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace gelenet::test {

inline Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0, bool rg = false)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(s, 0.0, rg);
    for (double& v : t.data())
        v = u(rng);
    return t;
}

inline double rel_diff(double a, double b)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline void expect_all_near(const Tensor& actual, const std::vector<double>& expected, double tol)
{
    ASSERT_EQ(actual.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i)
        EXPECT_NEAR(actual.data()[i], expected[i], tol) << "at flat index " << i;
}

inline void expect_same(const Tensor& a, const Tensor& b, double tol = 0.0)
{
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "at flat index " << i;
}

/// Direct six-loop cross-correlation, zero padding.
inline std::vector<double> naive_conv(const Tensor& x, const Tensor& w, const std::vector<double>& bias,
                                      std::size_t stride, std::size_t pad)
{
    const Shape xs = x.shape(), ws = w.shape();
    const std::size_t oh = (xs.h + 2 * pad - ws.h) / stride + 1;
    const std::size_t ow = (xs.w + 2 * pad - ws.w) / stride + 1;
    std::vector<double> out(xs.n * ws.n * oh * ow, 0.0);
    for (std::size_t n = 0; n < xs.n; ++n)
        for (std::size_t co = 0; co < ws.n; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[co];
                    for (std::size_t ci = 0; ci < xs.c; ++ci)
                        for (std::size_t ky = 0; ky < ws.h; ++ky)
                            for (std::size_t kx = 0; kx < ws.w; ++kx) {
                                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w))
                                    continue;
                                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
                            }
                    out[((n * ws.n + co) * oh + oy) * ow + ox] = acc;
                }
    return out;
}

/// Gradient check of `f(inputs)` projected onto fixed random weights.
template <typename F>
GradCheckResult check_projected(F f, std::vector<Tensor> inputs, std::uint64_t seed = 1, double tol = 1e-3)
{
    Tensor probe;
    {
        const Tensor out = f(inputs);
        probe = random_tensor(out.shape(), seed + 99);
        for (double& v : probe.data())
            v /= std::sqrt(static_cast<double>(out.size()));
    }
    std::vector<GradCheckTarget> targets;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        inputs[i].set_requires_grad(true);
        targets.push_back({"input" + std::to_string(i), inputs[i]});
    }
    GradCheckOptions opts;
    opts.tolerance = tol;
    opts.seed = seed;
    return check_gradients([&] { return ops::sum(ops::mul(f(inputs), probe)); }, targets, opts);
}

inline void fill(Parameter& p, double v)
{
    std::fill(p.value.data().begin(), p.value.data().end(), v);
}

inline void assign(Parameter& p, const Tensor& values)
{
    ASSERT_EQ(p.value.shape(), values.shape()) << p.name;
    std::copy(values.data().begin(), values.data().end(), p.value.data().begin());
}

/// Gradient check of `f()` projected onto fixed random weights, over every parameter of `params`.
template <typename F>
GradCheckResult check_parameters(F f, ParameterSet& params, std::uint64_t seed = 1, double tol = 1e-3)
{
    Tensor probe;
    {
        const Tensor out = f();
        probe = random_tensor(out.shape(), seed + 99);
        for (double& v : probe.data())
            v /= std::sqrt(static_cast<double>(out.size()));
    }
    std::vector<GradCheckTarget> targets;
    for (auto& p : params)
        targets.push_back({p->name, p->value});
    GradCheckOptions opts;
    opts.tolerance = tol;
    opts.seed = seed;
    return check_gradients([&] { return ops::sum(ops::mul(f(), probe)); }, targets, opts);
}

} // namespace gelenet::test
