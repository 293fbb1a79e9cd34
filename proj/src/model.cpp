#include "gelenet/model.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace gelenet {

std::string_view to_string(Enhancer e)
{
    switch (e) {
    case Enhancer::none: return "none";
    case Enhancer::swsam: return "swsam";
    case Enhancer::dswsam: return "dswsam";
    }
    return "?";
}

Enhancer parse_enhancer(std::string_view name)
{
    if (name == "none") return Enhancer::none;
    if (name == "swsam") return Enhancer::swsam;
    if (name == "dswsam") return Enhancer::dswsam;
    throw std::invalid_argument("unknown enhancement module '" + std::string(name) + "' (expected none, swsam or dswsam)");
}

ModelConfig ModelConfig::full(const BackboneConfig& backbone)
{
    ModelConfig c;
    c.backbone = backbone;
    return c;
}

ModelConfig ModelConfig::baseline(const BackboneConfig& backbone)
{
    ModelConfig c;
    c.backbone = backbone;
    c.low = Enhancer::none;
    c.high = Enhancer::none;
    c.ktm = false;
    return c;
}

namespace {

std::string normalize_variant_name(std::string_view name)
{
    std::string out;
    for (char ch : name) {
        if (ch == ' ' || ch == '_')
            ch = '-';
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

struct VariantSpec {
    const char* name;
    int row;
    Enhancer low, high;
    bool ktm;
    KtmMode mode;
    AttentionVariant attention;
};

constexpr VariantSpec kVariants[] = {
    {"baseline", 1, Enhancer::none, Enhancer::none, false, KtmMode::full, AttentionVariant::full},
    {"+dswsam", 2, Enhancer::dswsam, Enhancer::none, false, KtmMode::full, AttentionVariant::full},
    {"+ktm", 3, Enhancer::none, Enhancer::none, true, KtmMode::full, AttentionVariant::full},
    {"+swsam", 4, Enhancer::none, Enhancer::swsam, false, KtmMode::full, AttentionVariant::full},
    {"+ktm+swsam", 5, Enhancer::none, Enhancer::swsam, true, KtmMode::full, AttentionVariant::full},
    {"+dswsam+swsam", 6, Enhancer::dswsam, Enhancer::swsam, false, KtmMode::full, AttentionVariant::full},
    {"+dswsam+ktm", 7, Enhancer::dswsam, Enhancer::none, true, KtmMode::full, AttentionVariant::full},
    {"dswsam-at-both-levels", 8, Enhancer::dswsam, Enhancer::dswsam, true, KtmMode::full, AttentionVariant::full},
    {"swsam-at-both-levels", 9, Enhancer::swsam, Enhancer::swsam, true, KtmMode::full, AttentionVariant::full},
    {"full", 10, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::full, AttentionVariant::full},
    {"w/o-shuffle", 0, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::full, AttentionVariant::no_shuffle},
    {"w/o-weights", 0, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::full, AttentionVariant::no_weights},
    {"w/-sa", 0, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::full, AttentionVariant::plain_sa},
    {"w/-sge", 0, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::full, AttentionVariant::sge},
    {"w/-sum", 0, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::sum_only, AttentionVariant::full},
    {"w/-product", 0, Enhancer::dswsam, Enhancer::swsam, true, KtmMode::product_only, AttentionVariant::full},
};

} // namespace

Variant make_variant(std::string_view name, const BackboneConfig& backbone)
{
    const std::string key = normalize_variant_name(name);
    for (const auto& v : kVariants) {
        if (key == v.name) {
            ModelConfig c;
            c.backbone = backbone;
            c.low = v.low;
            c.high = v.high;
            c.ktm = v.ktm;
            c.ktm_mode = v.mode;
            c.attention = v.attention;
            return Variant{v.name, v.row, c};
        }
    }
    throw std::invalid_argument("unknown ablation variant '" + std::string(name) + "'");
}

std::vector<std::string> known_variants()
{
    std::vector<std::string> names;
    for (const auto& v : kVariants)
        names.emplace_back(v.name);
    return names;
}

GeleNet::GeleNet(const ModelConfig& config, std::uint64_t seed) : config_(config)
{
    config_.backbone.validate();
    Rng rng(seed);
    backbone_.emplace(params_, config_.backbone, rng);
    if (config_.low != Enhancer::none)
        low_.emplace(params_, "low", kPyramidChannels, config_.low == Enhancer::dswsam, config_.attention, rng);
    if (config_.ktm)
        ktm_.emplace(params_, "ktm", kPyramidChannels, config_.ktm_mode, rng);
    if (config_.high != Enhancer::none)
        high_.emplace(params_, "high", kPyramidChannels, config_.high == Enhancer::dswsam, config_.attention, rng);
    decoder_ = PartialDecoder(params_, "decoder", kPyramidChannels, rng);
}

ForwardResult GeleNet::forward(const Tensor& images) const
{
    ForwardResult r;
    r.pyramid = (*backbone_)(images);
    const FeaturePyramid& p = r.pyramid;

    if (low_) {
        r.low_trace = low_->forward(p.f1);
        r.f_low = r.low_trace->output;
    } else {
        r.f_low = p.f1;
    }
    if (ktm_) {
        r.ktm_trace = ktm_->forward(p.f2, p.f3);
        r.f_mid = r.ktm_trace->output;
    } else {
        r.f_mid = ops::add(p.f2, p.f3);
    }
    if (high_) {
        r.high_trace = high_->forward(p.f4);
        r.f_high = r.high_trace->output;
    } else {
        r.f_high = p.f4;
    }

    r.s_logits = decoder_.logits(r.f_low, r.f_mid, r.f_high);
    r.s = ops::sigmoid(r.s_logits);
    r.saliency = finalize_saliency(r.s);
    return r;
}

} // namespace gelenet
