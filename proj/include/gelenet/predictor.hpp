#pragma once

#include "gelenet/nn.hpp"

namespace gelenet {

/**
 * Partial-decoder cascade over the enhanced features, at 1/4, 1/16 and 1/32
 * of the input resolution:
 *
 *   b4 = conv(f_swsa)
 *   b3 = conv(f_ktm ⊗ up2(conv(b4)))
 *   b2 = conv(f_dswsa ⊗ up8(conv(b4)) ⊗ up4(conv(b3)))
 *   d  = conv(concat(b2, up4(conv(concat(b3, up2(b4))))))
 *   s  = sigmoid(conv1x1(d))
 */
class PartialDecoder {
public:
    PartialDecoder() = default;
    PartialDecoder(ParameterSet& params, const std::string& name, std::size_t channels, Rng& rng);

    Tensor logits(const Tensor& f_low, const Tensor& f_mid, const Tensor& f_high) const;
    Tensor operator()(const Tensor& f_low, const Tensor& f_mid, const Tensor& f_high) const;

    const Conv2d& head() const { return head_; }

private:
    Conv2d b4_, b3_, b2_, up_b4_to_mid_, up_b4_to_low_, up_b3_to_low_, cat_mid_, fuse_, head_;
};

/// 4x bilinear upsampling of the initial map to input resolution.
Tensor finalize_saliency(const Tensor& s);

struct LossTerms {
    double iou = 0.0;
    double bce = 0.0;
};

inline constexpr double kLogClamp = 1e-7;

/**
 * L = l_iou + l_bce for saliency S in [0,1] and binary ground truth G, both (n,1,H,W).
 * l_iou = 1 - (sum(S G) + 1) / (sum S + sum G - sum(S G) + 1), averaged over images.
 * l_bce = -mean[G log S + (1 - G) log(1 - S)] with S clamped to [1e-7, 1 - 1e-7].
 */
Tensor hybrid_loss(const Tensor& saliency, const Tensor& ground_truth, LossTerms* terms = nullptr);

} // namespace gelenet
