#pragma once

#include "gelenet/nn.hpp"

#include <array>
#include <memory>

namespace gelenet {

inline constexpr std::size_t kPyramidChannels = 32;

struct BackboneConfig {
    std::size_t input_size = 64;
    std::array<std::size_t, 4> stub_channels{16, 32, 48, 64};

    static BackboneConfig desk() { return {}; }
    static BackboneConfig paper() { return {352, {64, 128, 320, 512}}; }

    /// Throws std::invalid_argument unless input_size is a positive multiple of 32.
    void validate() const;
};

/// Raw four-level features at 1/4, 1/8, 1/16 and 1/32 of the input resolution.
struct RawFeatures {
    std::array<Tensor, 4> levels;
};

/// Backbone outputs after channel normalization: f2 is reduced to f3's size.
struct FeaturePyramid {
    Tensor f1, f2, f3, f4;
};

/// Anything that maps an (n,3,H,W) image batch to four stage features with
/// the stage resolutions above and channels() channels per stage.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual RawFeatures extract(const Tensor& image) const = 0;
    virtual std::array<std::size_t, 4> channels() const = 0;
};

/// Trainable stand-in for a transformer backbone: four stages of a stride-2
/// 3x3 conv followed by a second 3x3 conv (stride 2 in stage 1, else 1), ReLU after each.
class StubExtractor final : public FeatureExtractor {
public:
    StubExtractor(ParameterSet& params, const BackboneConfig& config, Rng& rng);

    RawFeatures extract(const Tensor& image) const override;
    std::array<std::size_t, 4> channels() const override { return channels_; }

private:
    std::array<std::size_t, 4> channels_;
    std::array<Conv2d, 4> down_;
    std::array<Conv2d, 4> refine_;
};

/// 1x1 convolutions to 32 channels per level; level 2 additionally passes a
/// stride-2 3x3 convolution so that f2 matches f3 spatially.
class PyramidNormalizer {
public:
    PyramidNormalizer(ParameterSet& params, const std::array<std::size_t, 4>& in_channels, Rng& rng);

    FeaturePyramid operator()(const RawFeatures& raw) const;

    Conv2d& level(std::size_t i) { return project_[i]; }

private:
    std::array<Conv2d, 4> project_;
    Conv2d reduce_f2_;
};

/// Extractor + normalizer. The extractor is swappable without touching the
/// downstream modules.
class Backbone {
public:
    Backbone(ParameterSet& params, const BackboneConfig& config, Rng& rng);
    Backbone(ParameterSet& params, const BackboneConfig& config, std::unique_ptr<FeatureExtractor> extractor,
             Rng& rng);

    FeaturePyramid operator()(const Tensor& image) const;
    RawFeatures extract(const Tensor& image) const;
    FeaturePyramid normalize(const RawFeatures& raw) const { return normalizer_(raw); }

    const BackboneConfig& config() const { return config_; }

private:
    BackboneConfig config_;
    std::unique_ptr<FeatureExtractor> extractor_;
    PyramidNormalizer normalizer_;
};

} // namespace gelenet
