#include "gelenet/dswsam.hpp"

#include <stdexcept>
#include <string>

namespace gelenet {

AttentionVariant parse_attention_variant(std::string_view name)
{
    if (name == "full") return AttentionVariant::full;
    if (name == "no_shuffle") return AttentionVariant::no_shuffle;
    if (name == "no_weights") return AttentionVariant::no_weights;
    if (name == "plain_sa") return AttentionVariant::plain_sa;
    if (name == "sge") return AttentionVariant::sge;
    throw std::invalid_argument("unknown attention variant '" + std::string(name) +
                                "' (expected full, no_shuffle, no_weights, plain_sa or sge)");
}

std::string_view to_string(AttentionVariant v)
{
    switch (v) {
    case AttentionVariant::full: return "full";
    case AttentionVariant::no_shuffle: return "no_shuffle";
    case AttentionVariant::no_weights: return "no_weights";
    case AttentionVariant::plain_sa: return "plain_sa";
    case AttentionVariant::sge: return "sge";
    }
    return "?";
}

std::vector<double> direction_mask(Direction d)
{
    constexpr std::size_t k = kDirectionalKernel;
    constexpr std::size_t mid = k / 2;
    std::vector<double> mask(k * k, 0.0);
    for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < k; ++c) {
            bool on = false;
            switch (d) {
            case Direction::horizontal: on = r == mid; break;
            case Direction::vertical: on = c == mid; break;
            case Direction::leading_diagonal: on = r == c; break;
            case Direction::reverse_diagonal: on = r + c == k - 1; break;
            }
            mask[r * k + c] = on ? 1.0 : 0.0;
        }
    return mask;
}

// ---------------------------------------------------------------------------

DirectionalConvUnit::DirectionalConvUnit(ParameterSet& params, const std::string& name, std::size_t in_channels,
                                         Rng& rng)
{
    static constexpr std::array<const char*, 4> tags{"h", "v", "ld", "rd"};
    for (std::size_t i = 0; i < 4; ++i)
        convs_[i] = Conv2d(params, name + ".dir_" + tags[i],
                           ConvSpec{in_channels, kDirectionalChannels, kDirectionalKernel, 1, kDirectionalKernel / 2, true},
                           rng, direction_mask(static_cast<Direction>(i)));
}

Tensor DirectionalConvUnit::branch(Direction d, const Tensor& x) const
{
    return convs_[static_cast<std::size_t>(d)](x);
}

Tensor DirectionalConvUnit::operator()(const Tensor& x) const
{
    const std::size_t expected = convs_[0].spec().in;
    if (x.shape().c != expected)
        throw ShapeError("directional unit: expected " + std::to_string(expected) + " input channels, got " +
                         std::to_string(x.shape().c));
    return ops::concat_channels({convs_[0](x), convs_[1](x), convs_[2](x), convs_[3](x)});
}

std::vector<Tensor> shuffle_and_split(const Tensor& x)
{
    if (x.shape().c % kAttentionGroups != 0)
        throw ShapeError("shuffle_and_split: channel count " + std::to_string(x.shape().c) + " not divisible by 4");
    return ops::split_channels(ops::channel_shuffle(x, kAttentionGroups), kAttentionGroups);
}

// ---------------------------------------------------------------------------

SpatialAttention::SpatialAttention(ParameterSet& params, const std::string& name, Rng& rng)
    : conv_(params, name, same_conv(2, 1, kSpatialAttentionKernel), rng)
{
}

Tensor SpatialAttention::operator()(const Tensor& x) const
{
    const Tensor pooled = ops::concat_channels({ops::channel_max(x), ops::channel_mean(x)});
    return ops::sigmoid(conv_(pooled));
}

WeightedAttentionFusion::WeightedAttentionFusion(ParameterSet& params, const std::string& name,
                                                 bool learnable_weights, Rng& rng)
    : conv_(params, name + ".conv", same_conv(1, 1, 3), rng)
{
    if (learnable_weights)
        logits_ = &params.create(name + ".logits", Shape{1, 1, 1, kAttentionGroups}, 0.0);
}

Tensor WeightedAttentionFusion::weights() const
{
    if (logits_ == nullptr)
        return Tensor(Shape{1, 1, 1, kAttentionGroups}, 1.0 / static_cast<double>(kAttentionGroups));
    return ops::softmax_rows(logits_->value);
}

Tensor WeightedAttentionFusion::combine(const std::vector<Tensor>& maps) const
{
    if (maps.size() != kAttentionGroups)
        throw ShapeError("weighted fusion expects 4 attention maps, got " + std::to_string(maps.size()));
    for (const auto& m : maps)
        if (m.shape() != maps.front().shape() || m.shape().c != 1)
            throw ShapeError("weighted fusion: attention maps must be single-channel with equal shapes (" +
                             maps.front().shape().str() + " vs " + m.shape().str() + ")");
    // sum_n w_n a_n as a 1x1 convolution whose kernel is the weight vector
    const Tensor kernel = ops::reshape(weights(), Shape{1, kAttentionGroups, 1, 1});
    return ops::conv2d(ops::concat_channels(maps), kernel, Tensor());
}

Tensor WeightedAttentionFusion::operator()(const std::vector<Tensor>& maps) const
{
    return ops::sigmoid(conv_(combine(maps)));
}

GroupEnhancement::GroupEnhancement(ParameterSet& params, const std::string& name)
{
    weight_ = &params.create(name + ".weight", Shape{1, kAttentionGroups, 1, 1}, 0.0);
    bias_ = &params.create(name + ".bias", Shape{1, kAttentionGroups, 1, 1}, 1.0);
}

Tensor GroupEnhancement::operator()(const Tensor& x) const
{
    const auto groups = ops::split_channels(x, kAttentionGroups);
    std::vector<Tensor> similarity;
    for (const auto& g : groups) {
        const Tensor xn = ops::mul(g, ops::global_avg_pool(g));
        similarity.push_back(ops::scale(ops::channel_mean(xn), static_cast<double>(g.shape().c)));
    }
    Tensor t = ops::spatial_standardize(ops::concat_channels(similarity), 1e-5);
    t = ops::add(ops::mul(t, weight_->value), bias_->value);
    const Tensor gate = ops::sigmoid(t);
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < groups.size(); ++i)
        out.push_back(ops::mul(groups[i], ops::slice_channels(gate, i, 1)));
    return ops::concat_channels(out);
}

// ---------------------------------------------------------------------------

Tensor attention_enhance(const Tensor& attention, const Tensor& features)
{
    if (attention.shape().c != 1 || attention.shape().n != features.shape().n ||
        attention.shape().h != features.shape().h || attention.shape().w != features.shape().w)
        throw ShapeError("attention_enhance: map " + attention.shape().str() + " cannot gate features " +
                         features.shape().str());
    return ops::add(ops::mul(attention, features), features);
}

Swsam::Swsam(ParameterSet& params, const std::string& name, std::size_t channels, bool directional,
             AttentionVariant variant, Rng& rng)
    : channels_(channels), directional_(directional), variant_(variant)
{
    if (channels % kAttentionGroups != 0)
        throw ShapeError("SWSAM needs a channel count divisible by 4, got " + std::to_string(channels));
    if (directional)
        unit_ = DirectionalConvUnit(params, name, channels, rng);
    switch (variant) {
    case AttentionVariant::full:
    case AttentionVariant::no_shuffle:
    case AttentionVariant::no_weights:
        for (std::size_t i = 0; i < kAttentionGroups; ++i)
            attention_.emplace_back(params, name + ".sa" + std::to_string(i + 1), rng);
        fusion_ = WeightedAttentionFusion(params, name + ".fusion", variant != AttentionVariant::no_weights, rng);
        break;
    case AttentionVariant::plain_sa:
        attention_.emplace_back(params, name + ".sa", rng);
        break;
    case AttentionVariant::sge:
        sge_ = GroupEnhancement(params, name + ".sge");
        break;
    }
}

AttentionTrace Swsam::forward(const Tensor& f, const Tensor* forced_attention) const
{
    if (f.shape().c != channels_)
        throw ShapeError("SWSAM: expected " + std::to_string(channels_) + " channels, got " + f.shape().str());
    AttentionTrace t;
    t.f_ori = directional_ ? unit_(f) : f;

    switch (variant_) {
    case AttentionVariant::full:
    case AttentionVariant::no_weights:
    case AttentionVariant::no_shuffle: {
        t.f_shuf = variant_ == AttentionVariant::no_shuffle ? t.f_ori : ops::channel_shuffle(t.f_ori, kAttentionGroups);
        const auto subsets = ops::split_channels(t.f_shuf, kAttentionGroups);
        for (std::size_t i = 0; i < kAttentionGroups; ++i)
            t.attention_maps.push_back(attention_[i](subsets[i]));
        t.a_ori = fusion_(t.attention_maps);
        break;
    }
    case AttentionVariant::plain_sa:
        t.f_shuf = t.f_ori;
        t.attention_maps.push_back(attention_[0](t.f_ori));
        t.a_ori = t.attention_maps.front();
        break;
    case AttentionVariant::sge:
        t.f_shuf = t.f_ori;
        t.output = sge_(t.f_ori);
        return t;
    }
    t.output = attention_enhance(forced_attention ? *forced_attention : t.a_ori, t.f_shuf);
    return t;
}

} // namespace gelenet
