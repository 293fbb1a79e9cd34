#include "gelenet/ktm.hpp"

#include <stdexcept>
#include <string>
#include <tuple>

namespace gelenet {

KtmMode parse_ktm_mode(std::string_view name)
{
    if (name == "full") return KtmMode::full;
    if (name == "sum_only") return KtmMode::sum_only;
    if (name == "product_only") return KtmMode::product_only;
    throw std::invalid_argument("unknown KTM mode '" + std::string(name) + "' (expected full, sum_only or product_only)");
}

std::string_view to_string(KtmMode m)
{
    switch (m) {
    case KtmMode::full: return "full";
    case KtmMode::sum_only: return "sum_only";
    case KtmMode::product_only: return "product_only";
    }
    return "?";
}

Ktm::Ktm(ParameterSet& params, const std::string& name, std::size_t channels, KtmMode mode, Rng& rng)
    : channels_(channels), mode_(mode)
{
    if (channels == 0 || channels % 2 != 0)
        throw std::invalid_argument("KTM needs an even channel count, got " + std::to_string(channels));
    query_ = Conv2d(params, name + ".query", ConvSpec{channels, channels / 2, 1, 1, 0, true}, rng);
    key_ = Conv2d(params, name + ".key", ConvSpec{channels, channels / 2, 1, 1, 0, true}, rng);
    value2_ = Conv2d(params, name + ".value2", ConvSpec{channels, channels, 1, 1, 0, true}, rng);
    value3_ = Conv2d(params, name + ".value3", ConvSpec{channels, channels, 1, 1, 0, true}, rng);
    gamma1_ = &params.create(name + ".gamma1", Shape{1, 1, 1, 1}, 0.0);
    gamma2_ = &params.create(name + ".gamma2", Shape{1, 1, 1, 1}, 0.0);
    integrate_ = Conv2d(params, name + ".integrate", same_conv(channels, channels, 3), rng);
}

std::pair<Tensor, Tensor> Ktm::combine(const Tensor& f2, const Tensor& f3)
{
    if (f2.shape() != f3.shape())
        throw ShapeError("KTM: f2 " + f2.shape().str() + " and f3 " + f3.shape().str() + " must have equal shapes");
    return {ops::mul(f2, f3), ops::add(f2, f3)};
}

Tensor Ktm::model_knowledge(const Tensor& f_pro, const Tensor& f_sum) const
{
    const Tensor* q_src = &f_sum;
    const Tensor* k_src = &f_pro;
    if (mode_ == KtmMode::sum_only)
        k_src = &f_sum;
    else if (mode_ == KtmMode::product_only)
        q_src = &f_pro;

    const Tensor q = query_(*q_src);
    const Tensor k = key_(*k_src);
    const Shape& s = q.shape();
    const std::size_t hw = s.plane();
    const Tensor f_q = ops::transpose2d(ops::reshape(q, Shape{s.n, 1, s.c, hw}));
    const Tensor f_k = ops::reshape(k, Shape{s.n, 1, s.c, hw});
    return ops::softmax_rows(ops::matmul(f_q, f_k));
}

Tensor Ktm::transfer(const Tensor& f2, const Tensor& f3, const Tensor& correlation, KtmTrace* trace) const
{
    const Shape& s = f2.shape();
    const std::size_t hw = s.plane();
    if (correlation.shape() != Shape{s.n, 1, hw, hw})
        throw ShapeError("KTM transfer: correlation " + correlation.shape().str() + " does not match " +
                         std::to_string(hw) + " positions");
    const Tensor ct = ops::transpose2d(correlation);
    auto transferred = [&](const Conv2d& value, const Tensor& raw) {
        const Tensor v = ops::reshape(value(raw), Shape{s.n, 1, s.c, hw});
        return ops::reshape(ops::matmul(v, ct), s);
    };
    const Tensor tsf1 = transferred(value2_, f2);
    const Tensor tsf2 = transferred(value3_, f3);
    const Tensor fused1 = ops::add(ops::mul(gamma1_->value, tsf1), f2);
    const Tensor fused2 = ops::add(ops::mul(gamma2_->value, tsf2), f3);
    if (trace != nullptr) {
        trace->tsf1 = tsf1;
        trace->tsf2 = tsf2;
    }
    return integrate_(ops::add(fused1, fused2));
}

KtmTrace Ktm::forward(const Tensor& f2, const Tensor& f3) const
{
    if (f2.shape().c != channels_)
        throw ShapeError("KTM: expected " + std::to_string(channels_) + " channels, got " + f2.shape().str());
    KtmTrace t;
    std::tie(t.f_pro, t.f_sum) = combine(f2, f3);
    t.correlation = model_knowledge(t.f_pro, t.f_sum);
    t.output = transfer(f2, f3, t.correlation, &t);
    return t;
}

} // namespace gelenet
