#pragma once

#include "gelenet/backbone.hpp"
#include "gelenet/dswsam.hpp"
#include "gelenet/ktm.hpp"
#include "gelenet/predictor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gelenet {

/// What enhances the lowest or highest pyramid level.
enum class Enhancer { none, swsam, dswsam };

std::string_view to_string(Enhancer e);
Enhancer parse_enhancer(std::string_view name);

struct ModelConfig {
    BackboneConfig backbone;
    Enhancer low = Enhancer::dswsam;
    Enhancer high = Enhancer::swsam;
    bool ktm = true;
    KtmMode ktm_mode = KtmMode::full;
    AttentionVariant attention = AttentionVariant::full;

    static ModelConfig full(const BackboneConfig& backbone = {});
    /// All three modules removed; f2 and f3 fused by element-wise sum.
    static ModelConfig baseline(const BackboneConfig& backbone = {});
};

/// Ablation presets by name ("baseline", "+dswsam", ..., "full", "w/o shuffle", "w/ sge", ...).
struct Variant {
    std::string name;
    int table_row = 0; // row number in the module-contribution table, 0 for component variants
    ModelConfig config;
};

Variant make_variant(std::string_view name, const BackboneConfig& backbone);
std::vector<std::string> known_variants();

struct ForwardResult {
    FeaturePyramid pyramid;
    std::optional<AttentionTrace> low_trace;
    std::optional<AttentionTrace> high_trace;
    std::optional<KtmTrace> ktm_trace;
    Tensor f_low, f_mid, f_high; // f_dswsa, f_ktm, f_swsa (or their ablated stand-ins)
    Tensor s_logits;
    Tensor s;        // initial map at 1/4 resolution
    Tensor saliency; // final map at input resolution
};

class GeleNet {
public:
    GeleNet(const ModelConfig& config, std::uint64_t seed);
    GeleNet(const GeleNet&) = delete;
    GeleNet& operator=(const GeleNet&) = delete;

    ForwardResult forward(const Tensor& images) const;
    Tensor predict(const Tensor& images) const { return forward(images).saliency; }

    ParameterSet& parameters() { return params_; }
    const ParameterSet& parameters() const { return params_; }
    const ModelConfig& config() const { return config_; }

    const Backbone& backbone() const { return *backbone_; }
    const Swsam* low_module() const { return low_ ? &*low_ : nullptr; }
    const Swsam* high_module() const { return high_ ? &*high_ : nullptr; }
    const Ktm* ktm() const { return ktm_ ? &*ktm_ : nullptr; }
    const PartialDecoder& decoder() const { return decoder_; }

private:
    ModelConfig config_;
    ParameterSet params_;
    std::optional<Backbone> backbone_;
    std::optional<Swsam> low_;
    std::optional<Swsam> high_;
    std::optional<Ktm> ktm_;
    PartialDecoder decoder_;
};

} // namespace gelenet
