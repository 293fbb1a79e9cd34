#pragma once

#include "gelenet/nn.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace gelenet {

/// Attention used inside the (D-)SWSAM slots, including the ablation variants.
enum class AttentionVariant {
    full,       // shuffle -> split -> 4x SA -> weighted fusion
    no_shuffle, // same without the channel shuffle
    no_weights, // fusion weights fixed at 0.25
    plain_sa,   // a single SA over all channels, no shuffle
    sge,        // spatial group-wise enhancement over 4 groups
};

AttentionVariant parse_attention_variant(std::string_view name);
std::string_view to_string(AttentionVariant v);

enum class Direction { horizontal, vertical, leading_diagonal, reverse_diagonal };

inline constexpr std::size_t kDirectionalKernel = 5;
inline constexpr std::size_t kDirectionalChannels = 8;
inline constexpr std::size_t kAttentionGroups = 4;
inline constexpr std::size_t kSpatialAttentionKernel = 7;

/// 5x5 0/1 support of a directional kernel, row-major.
std::vector<double> direction_mask(Direction d);

/// Four line-supported 5x5 convolutions (32 -> 8 each), outputs concatenated
/// in the order horizontal, vertical, leading diagonal, reverse diagonal.
class DirectionalConvUnit {
public:
    DirectionalConvUnit() = default;
    DirectionalConvUnit(ParameterSet& params, const std::string& name, std::size_t in_channels, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    Tensor branch(Direction d, const Tensor& x) const;
    const Conv2d& conv(Direction d) const { return convs_[static_cast<std::size_t>(d)]; }

private:
    std::array<Conv2d, 4> convs_;
};

/// Channel shuffle with 4 groups followed by a split into 4 consecutive subsets.
std::vector<Tensor> shuffle_and_split(const Tensor& x);

/// CBAM spatial attention: sigmoid(conv7x7([max_c(x), mean_c(x)])).
class SpatialAttention {
public:
    SpatialAttention() = default;
    SpatialAttention(ParameterSet& params, const std::string& name, Rng& rng);

    Tensor operator()(const Tensor& x) const;
    const Conv2d& conv() const { return conv_; }

private:
    Conv2d conv_;
};

/// a_ori = sigmoid(conv3x3(sum_n w_n * a_n)), w = softmax(logits).
/// Without learnable weights, w_n is fixed at 1/4.
class WeightedAttentionFusion {
public:
    WeightedAttentionFusion() = default;
    WeightedAttentionFusion(ParameterSet& params, const std::string& name, bool learnable_weights, Rng& rng);

    Tensor operator()(const std::vector<Tensor>& maps) const;
    /// Fusion weights as a (1,1,1,4) tensor on the simplex.
    Tensor weights() const;
    /// sum_n w_n * a_n, the input of the fusion convolution.
    Tensor combine(const std::vector<Tensor>& maps) const;

    Parameter* logits() const { return logits_; }
    const Conv2d& conv() const { return conv_; }

private:
    Parameter* logits_ = nullptr;
    Conv2d conv_;
};

/// Spatial group-wise enhancement over 4 channel groups.
class GroupEnhancement {
public:
    GroupEnhancement() = default;
    GroupEnhancement(ParameterSet& params, const std::string& name);

    Tensor operator()(const Tensor& x) const;

private:
    Parameter* weight_ = nullptr;
    Parameter* bias_ = nullptr;
};

/// Intermediate tensors of one (D-)SWSAM pass.
struct AttentionTrace {
    Tensor f_ori;                       // directional unit output (input itself for SWSAM)
    Tensor f_shuf;                      // enhancement target
    std::vector<Tensor> attention_maps; // a^n (a single map for plain SA, none for SGE)
    Tensor a_ori;                       // fused attention map (undefined for SGE)
    Tensor output;
};

/// (a ⊗ f) ⊕ f with the single-channel map broadcast over channels.
Tensor attention_enhance(const Tensor& attention, const Tensor& features);

/**
 * SWSAM, optionally preceded by the directional convolution unit (D-SWSAM).
 *
 * Full variant: f_shuf = shuffle(f_ori), a^n = SA_n(split(f_shuf)_n),
 * a_ori = fusion(a^1..a^4), output = (a_ori ⊗ f_shuf) ⊕ f_shuf.
 */
class Swsam {
public:
    Swsam() = default;
    Swsam(ParameterSet& params, const std::string& name, std::size_t channels, bool directional,
          AttentionVariant variant, Rng& rng);

    Tensor operator()(const Tensor& f) const { return forward(f).output; }

    /// `forced_attention`, when given, replaces a_ori in the enhancement step.
    AttentionTrace forward(const Tensor& f, const Tensor* forced_attention = nullptr) const;

    bool directional() const { return directional_; }
    AttentionVariant variant() const { return variant_; }
    const DirectionalConvUnit& directional_unit() const { return unit_; }
    const WeightedAttentionFusion& fusion() const { return fusion_; }
    const SpatialAttention& attention(std::size_t n) const { return attention_[n]; }

private:
    std::size_t channels_ = 0;
    bool directional_ = false;
    AttentionVariant variant_ = AttentionVariant::full;
    DirectionalConvUnit unit_;
    std::vector<SpatialAttention> attention_;
    WeightedAttentionFusion fusion_;
    GroupEnhancement sge_;
};

} // namespace gelenet
