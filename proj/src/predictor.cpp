#include "gelenet/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace gelenet {

PartialDecoder::PartialDecoder(ParameterSet& params, const std::string& name, std::size_t c, Rng& rng)
{
    b4_ = Conv2d(params, name + ".b4", same_conv(c, c, 3), rng);
    up_b4_to_mid_ = Conv2d(params, name + ".up_b4_mid", same_conv(c, c, 3), rng);
    b3_ = Conv2d(params, name + ".b3", same_conv(c, c, 3), rng);
    up_b4_to_low_ = Conv2d(params, name + ".up_b4_low", same_conv(c, c, 3), rng);
    up_b3_to_low_ = Conv2d(params, name + ".up_b3_low", same_conv(c, c, 3), rng);
    b2_ = Conv2d(params, name + ".b2", same_conv(c, c, 3), rng);
    cat_mid_ = Conv2d(params, name + ".cat_mid", same_conv(2 * c, 2 * c, 3), rng);
    fuse_ = Conv2d(params, name + ".fuse", same_conv(3 * c, c, 3), rng);
    head_ = Conv2d(params, name + ".head", ConvSpec{c, 1, 1, 1, 0, true}, rng);
}

Tensor PartialDecoder::logits(const Tensor& f_low, const Tensor& f_mid, const Tensor& f_high) const
{
    const Shape& hs = f_high.shape();
    if (f_mid.shape() != Shape{hs.n, hs.c, hs.h * 2, hs.w * 2} ||
        f_low.shape() != Shape{hs.n, hs.c, hs.h * 8, hs.w * 8})
        throw ShapeError("decoder: inconsistent pyramid shapes low " + f_low.shape().str() + ", mid " +
                         f_mid.shape().str() + ", high " + hs.str() + " (expected 8x / 2x / 1x resolutions)");
    using ops::bilinear_upsample;
    using ops::mul;
    const Tensor b4 = b4_(f_high);
    const Tensor b3 = b3_(mul(f_mid, bilinear_upsample(up_b4_to_mid_(b4), 2)));
    const Tensor b2 = b2_(mul(mul(f_low, bilinear_upsample(up_b4_to_low_(b4), 8)),
                              bilinear_upsample(up_b3_to_low_(b3), 4)));
    const Tensor mid = cat_mid_(ops::concat_channels({b3, bilinear_upsample(b4, 2)}));
    const Tensor d = fuse_(ops::concat_channels({b2, bilinear_upsample(mid, 4)}));
    return head_(d);
}

Tensor PartialDecoder::operator()(const Tensor& f_low, const Tensor& f_mid, const Tensor& f_high) const
{
    return ops::sigmoid(logits(f_low, f_mid, f_high));
}

Tensor finalize_saliency(const Tensor& s)
{
    return ops::bilinear_upsample(s, 4);
}

Tensor hybrid_loss(const Tensor& saliency, const Tensor& ground_truth, LossTerms* terms)
{
    const Shape& s = saliency.shape();
    if (s != ground_truth.shape())
        throw ShapeError("hybrid_loss: saliency " + s.str() + " and ground truth " + ground_truth.shape().str() +
                         " differ");
    if (s.c != 1 || s.size() == 0)
        throw ShapeError("hybrid_loss: expected non-empty single-channel maps, got " + s.str());
    for (double v : saliency.data())
        if (std::isnan(v))
            throw std::domain_error("hybrid_loss: NaN in saliency map");
    for (double v : ground_truth.data())
        if (std::isnan(v))
            throw std::domain_error("hybrid_loss: NaN in ground truth");

    const double* S = saliency.ptr();
    const double* G = ground_truth.ptr();
    const std::size_t plane = s.plane();
    const std::size_t total = s.size();

    double bce = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
        const double p = std::clamp(S[i], kLogClamp, 1.0 - kLogClamp);
        bce -= G[i] * std::log(p) + (1.0 - G[i]) * std::log(1.0 - p);
    }
    bce /= static_cast<double>(total);

    std::vector<double> inter(s.n, 0.0), uni(s.n, 0.0);
    double iou = 0.0;
    for (std::size_t b = 0; b < s.n; ++b) {
        double i_sum = 0.0, s_sum = 0.0, g_sum = 0.0;
        for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
            i_sum += S[i] * G[i];
            s_sum += S[i];
            g_sum += G[i];
        }
        inter[b] = i_sum;
        uni[b] = s_sum + g_sum - i_sum;
        iou += 1.0 - (i_sum + 1.0) / (uni[b] + 1.0);
    }
    iou /= static_cast<double>(s.n);

    if (terms != nullptr)
        *terms = LossTerms{iou, bce};

    Tensor out = Tensor::scalar(iou + bce);
    if (should_record({&saliency})) {
        Tape::active()->record("hybrid_loss", {saliency, ground_truth}, out,
                               [saliency, ground_truth, inter, uni](const Tensor& o) mutable {
                                   const Shape& s = saliency.shape();
                                   const std::size_t plane = s.plane();
                                   const double g = o.grad()[0];
                                   const double inv_total = 1.0 / static_cast<double>(s.size());
                                   const double inv_n = 1.0 / static_cast<double>(s.n);
                                   const double* S = saliency.ptr();
                                   const double* G = ground_truth.ptr();
                                   auto gs = saliency.ensure_grad();
                                   for (std::size_t b = 0; b < s.n; ++b) {
                                       const double u1 = uni[b] + 1.0;
                                       const double i1 = inter[b] + 1.0;
                                       for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
                                           double d = -(G[i] * u1 - i1 * (1.0 - G[i])) / (u1 * u1) * inv_n;
                                           if (S[i] > kLogClamp && S[i] < 1.0 - kLogClamp)
                                               d -= (G[i] / S[i] - (1.0 - G[i]) / (1.0 - S[i])) * inv_total;
                                           gs[i] += g * d;
                                       }
                                   }
                               });
    }
    return out;
}

} // namespace gelenet
