#include "gelenet/backbone.hpp"

namespace gelenet {

void BackboneConfig::validate() const
{
    if (input_size == 0 || input_size % 32 != 0)
        throw std::invalid_argument("input size " + std::to_string(input_size) + " is not a positive multiple of 32");
    for (std::size_t c : stub_channels)
        if (c == 0)
            throw std::invalid_argument("stub channel counts must be positive");
}

StubExtractor::StubExtractor(ParameterSet& params, const BackboneConfig& config, Rng& rng)
    : channels_(config.stub_channels)
{
    std::size_t in = 3;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::string prefix = "backbone.stage" + std::to_string(i + 1);
        const std::size_t out = channels_[i];
        down_[i] = Conv2d(params, prefix + ".down", ConvSpec{in, out, 3, 2, 1, true}, rng);
        refine_[i] = Conv2d(params, prefix + ".refine", ConvSpec{out, out, 3, i == 0 ? 2u : 1u, 1, true}, rng);
        in = out;
    }
}

RawFeatures StubExtractor::extract(const Tensor& image) const
{
    const Shape& s = image.shape();
    if (s.c != 3)
        throw ShapeError("backbone: expected a 3-channel image batch, got " + s.str());
    if (s.h != s.w || s.h == 0 || s.h % 32 != 0)
        throw std::invalid_argument("backbone: input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                    " must be square with a side divisible by 32");
    RawFeatures raw;
    Tensor x = image;
    for (std::size_t i = 0; i < 4; ++i) {
        x = ops::relu(down_[i](x));
        x = ops::relu(refine_[i](x));
        raw.levels[i] = x;
    }
    return raw;
}

PyramidNormalizer::PyramidNormalizer(ParameterSet& params, const std::array<std::size_t, 4>& in_channels, Rng& rng)
{
    for (std::size_t i = 0; i < 4; ++i)
        project_[i] = Conv2d(params, "normalize.level" + std::to_string(i + 1),
                             ConvSpec{in_channels[i], kPyramidChannels, 1, 1, 0, true}, rng);
    reduce_f2_ = Conv2d(params, "normalize.level2.reduce", ConvSpec{kPyramidChannels, kPyramidChannels, 3, 2, 1, true},
                        rng);
}

FeaturePyramid PyramidNormalizer::operator()(const RawFeatures& raw) const
{
    const std::size_t side1 = raw.levels[0].shape().h;
    for (std::size_t i = 0; i < 4; ++i) {
        const Shape& s = raw.levels[i].shape();
        const std::size_t expected = side1 >> i;
        if (s.c != project_[i].spec().in || s.h != expected || s.w != expected)
            throw ShapeError("normalize_pyramid: stage " + std::to_string(i + 1) + " has shape " + s.str() +
                             ", expected " + std::to_string(project_[i].spec().in) + " channels at " +
                             std::to_string(expected) + "x" + std::to_string(expected));
    }
    FeaturePyramid p;
    p.f1 = project_[0](raw.levels[0]);
    p.f2 = reduce_f2_(project_[1](raw.levels[1]));
    p.f3 = project_[2](raw.levels[2]);
    p.f4 = project_[3](raw.levels[3]);
    if (p.f2.shape() != p.f3.shape())
        throw ShapeError("normalize_pyramid: f2 " + p.f2.shape().str() + " does not match f3 " + p.f3.shape().str());
    return p;
}

Backbone::Backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng)
    : config_(config),
      extractor_((config.validate(), std::make_unique<StubExtractor>(params, config, rng))),
      normalizer_(params, extractor_->channels(), rng)
{
}

Backbone::Backbone(ParameterSet& params, const BackboneConfig& config, std::unique_ptr<FeatureExtractor> extractor,
                   Rng& rng)
    : config_(config), extractor_(std::move(extractor)), normalizer_(params, extractor_->channels(), rng)
{
    config_.validate();
}

RawFeatures Backbone::extract(const Tensor& image) const
{
    const Shape& s = image.shape();
    if (s.h != config_.input_size || s.w != config_.input_size)
        throw ShapeError("backbone: image " + s.str() + " does not match configured input size " +
                         std::to_string(config_.input_size));
    return extractor_->extract(image);
}

FeaturePyramid Backbone::operator()(const Tensor& image) const
{
    return normalizer_(extract(image));
}

} // namespace gelenet
