#pragma once

#include "gelenet/nn.hpp"

#include <string_view>
#include <utility>

namespace gelenet {

enum class KtmMode { full, sum_only, product_only };

KtmMode parse_ktm_mode(std::string_view name);
std::string_view to_string(KtmMode m);

struct KtmTrace {
    Tensor f_pro, f_sum;
    Tensor correlation; // C, shape (n,1,hw,hw)
    Tensor tsf1, tsf2;  // transferred features before the residual fusion
    Tensor output;
};

/**
 * Knowledge transfer between two equally-sized mid-level features.
 *
 * Query from the projected sum, key from the projected product:
 *   C = softmax_rows(Q K),  Q: (hw)x(c/2),  K: (c/2)x(hw)
 *   tsf_i = R(V_i C^T),  f~_i = gamma_i * tsf_i + raw_i
 *   out = conv3x3(f~_1 + f~_2)
 */
class Ktm {
public:
    Ktm() = default;
    Ktm(ParameterSet& params, const std::string& name, std::size_t channels, KtmMode mode, Rng& rng);

    static std::pair<Tensor, Tensor> combine(const Tensor& f2, const Tensor& f3);

    Tensor model_knowledge(const Tensor& f_pro, const Tensor& f_sum) const;
    Tensor transfer(const Tensor& f2, const Tensor& f3, const Tensor& correlation, KtmTrace* trace = nullptr) const;

    KtmTrace forward(const Tensor& f2, const Tensor& f3) const;
    Tensor operator()(const Tensor& f2, const Tensor& f3) const { return forward(f2, f3).output; }

    KtmMode mode() const { return mode_; }
    Parameter& gamma(std::size_t i) const { return i == 0 ? *gamma1_ : *gamma2_; }
    const Conv2d& query() const { return query_; }
    const Conv2d& key() const { return key_; }
    const Conv2d& value(std::size_t i) const { return i == 0 ? value2_ : value3_; }
    const Conv2d& integrate() const { return integrate_; }

private:
    std::size_t channels_ = 0;
    KtmMode mode_ = KtmMode::full;
    Conv2d query_, key_, value2_, value3_, integrate_;
    Parameter* gamma1_ = nullptr;
    Parameter* gamma2_ = nullptr;
};

} // namespace gelenet
