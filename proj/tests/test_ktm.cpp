#include "support.hpp"

#include "gelenet/ktm.hpp"

using namespace gelenet;
using namespace gelenet::test;

namespace {

void randomize(ParameterSet& ps, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    for (auto& p : ps)
        for (double& v : p->value.data())
            v += noise(rng);
}

/// out[n][o][i] = b[o] + sum_c w[o][c] x[n][c][i]: a 1x1 convolution over flat positions.
std::vector<std::vector<std::vector<double>>> pointwise(const Tensor& x, const Conv2d& conv)
{
    const Shape s = x.shape();
    const Tensor& w = conv.weight().value;
    const std::size_t out = w.shape().n, hw = s.plane();
    std::vector r(s.n, std::vector(out, std::vector<double>(hw)));
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t o = 0; o < out; ++o)
            for (std::size_t i = 0; i < hw; ++i) {
                double acc = conv.bias()->value.data()[o];
                for (std::size_t c = 0; c < s.c; ++c)
                    acc += w.at(o, c, 0, 0) * x.data()[(n * s.c + c) * hw + i];
                r[n][o][i] = acc;
            }
    return r;
}

/// C[n][i][j] = softmax_j(sum_c Q[c][i] K[c][j]), computed from flat indices.
std::vector<std::vector<std::vector<double>>> correlation_oracle(const Ktm& ktm, const Tensor& q_src,
                                                                 const Tensor& k_src)
{
    const auto q = pointwise(q_src, ktm.query());
    const auto k = pointwise(k_src, ktm.key());
    const std::size_t n_batch = q.size(), half = q[0].size(), hw = q[0][0].size();
    std::vector c(n_batch, std::vector(hw, std::vector<double>(hw)));
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t i = 0; i < hw; ++i) {
            long double total = 0.0L;
            std::vector<long double> e(hw);
            for (std::size_t j = 0; j < hw; ++j) {
                long double dot = 0.0L;
                for (std::size_t ch = 0; ch < half; ++ch)
                    dot += static_cast<long double>(q[n][ch][i]) * k[n][ch][j];
                e[j] = std::exp(dot);
                total += e[j];
            }
            for (std::size_t j = 0; j < hw; ++j)
                c[n][i][j] = static_cast<double>(e[j] / total);
        }
    return c;
}

Tensor permute_positions(const Tensor& x, const std::vector<std::size_t>& perm)
{
    // out position i takes input position perm[i]
    Tensor out(x.shape());
    const std::size_t hw = x.shape().plane();
    for (std::size_t nc = 0; nc < x.shape().n * x.shape().c; ++nc)
        for (std::size_t i = 0; i < hw; ++i)
            out.data()[nc * hw + i] = x.data()[nc * hw + perm[i]];
    return out;
}

} // namespace

TEST(KtmCombine, Identities)
{
    const Tensor f2 = random_tensor({2, 32, 3, 3}, 20);
    auto [pro1, sum1] = Ktm::combine(f2, Tensor(f2.shape(), 1.0));
    expect_same(pro1, f2);
    for (std::size_t i = 0; i < f2.size(); ++i)
        EXPECT_EQ(sum1.data()[i], f2.data()[i] + 1.0);
    auto [pro0, sum0] = Ktm::combine(f2, Tensor(f2.shape(), 0.0));
    for (double v : pro0.data())
        EXPECT_EQ(v, 0.0);
    expect_same(sum0, f2);
}

TEST(KtmCombine, ElementLoopOracle)
{
    const Tensor f2 = random_tensor({2, 32, 3, 3}, 21);
    const Tensor f3 = random_tensor({2, 32, 3, 3}, 121);
    auto [pro, sum] = Ktm::combine(f2, f3);
    for (std::size_t i = 0; i < f2.size(); ++i) {
        EXPECT_EQ(pro.data()[i], f2.data()[i] * f3.data()[i]);
        EXPECT_EQ(sum.data()[i], f2.data()[i] + f3.data()[i]);
    }
    EXPECT_THROW((void)Ktm::combine(f2, Tensor(Shape{2, 32, 3, 4})), ShapeError);
}

TEST(KtmKnowledge, UniformAtZeroInput)
{
    for (KtmMode mode : {KtmMode::full, KtmMode::sum_only, KtmMode::product_only}) {
        ParameterSet ps;
        Rng rng(22);
        Ktm ktm(ps, "ktm", 32, mode, rng);
        const Tensor zero(Shape{1, 32, 3, 3});
        const KtmTrace t = ktm.forward(zero, zero);
        ASSERT_EQ(t.correlation.shape(), (Shape{1, 1, 9, 9}));
        for (double v : t.correlation.data())
            EXPECT_DOUBLE_EQ(v, 1.0 / 9.0);
    }
}

TEST(KtmKnowledge, FlatIndexOracle)
{
    ParameterSet ps;
    Rng rng(23);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    randomize(ps, 123);
    const Tensor f2 = random_tensor({2, 32, 2, 2}, 23);
    const Tensor f3 = random_tensor({2, 32, 2, 2}, 223);
    const KtmTrace t = ktm.forward(f2, f3);
    const auto ref = correlation_oracle(ktm, t.f_sum, t.f_pro);
    ASSERT_EQ(t.correlation.shape(), (Shape{2, 1, 4, 4}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                EXPECT_NEAR(t.correlation.at(n, 0, i, j), ref[n][i][j], 1e-12);
}

TEST(KtmKnowledge, RowsSumToOne)
{
    ParameterSet ps;
    Rng rng(24);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    randomize(ps, 124);
    const KtmTrace t = ktm.forward(random_tensor({2, 32, 5, 5}, 24, -3, 3), random_tensor({2, 32, 5, 5}, 25, -3, 3));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 25; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 25; ++j) {
                ASSERT_GE(t.correlation.at(n, 0, i, j), 0.0);
                row += t.correlation.at(n, 0, i, j);
            }
            EXPECT_NEAR(row, 1.0, 1e-6);
        }
}

TEST(KtmTransfer, ZeroGammaIsPlainFusion)
{
    ParameterSet ps;
    Rng rng(26);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    EXPECT_EQ(ktm.gamma(0).value.item(), 0.0);
    EXPECT_EQ(ktm.gamma(1).value.item(), 0.0);
    const Tensor f2 = random_tensor({2, 32, 4, 4}, 26);
    const Tensor f3 = random_tensor({2, 32, 4, 4}, 27);
    const Tensor out = ktm(f2, f3);
    const Tensor ref = ktm.integrate()(ops::add(f2, f3));
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        worst = std::max(worst, std::abs(out.data()[i] - ref.data()[i]));
    EXPECT_LT(worst, 1e-12);
}

TEST(KtmTransfer, IdentityCorrelationLeavesValuesUnmixed)
{
    ParameterSet ps;
    Rng rng(28);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    const Tensor f2 = random_tensor({1, 32, 3, 3}, 28);
    const Tensor f3 = random_tensor({1, 32, 3, 3}, 128);
    Tensor eye(Shape{1, 1, 9, 9});
    for (std::size_t i = 0; i < 9; ++i)
        eye.at(0, 0, i, i) = 1.0;
    KtmTrace t;
    (void)ktm.transfer(f2, f3, eye, &t);
    expect_same(t.tsf1, ktm.value(0)(f2), 1e-15);
    expect_same(t.tsf2, ktm.value(1)(f3), 1e-15);
    EXPECT_THROW((void)ktm.transfer(f2, f3, Tensor(Shape{1, 1, 4, 4})), ShapeError);
}

TEST(KtmTransfer, FullFlatIndexOracle)
{
    ParameterSet ps;
    Rng rng(29);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    randomize(ps, 129);
    fill(ktm.gamma(0), 0.7);
    fill(ktm.gamma(1), -0.4);
    const Tensor f2 = random_tensor({2, 32, 2, 2}, 29);
    const Tensor f3 = random_tensor({2, 32, 2, 2}, 229);
    const KtmTrace t = ktm.forward(f2, f3);

    Tensor f_sum(f2.shape()), f_pro(f2.shape());
    for (std::size_t i = 0; i < f2.size(); ++i) {
        f_sum.data()[i] = f2.data()[i] + f3.data()[i];
        f_pro.data()[i] = f2.data()[i] * f3.data()[i];
    }
    const auto c = correlation_oracle(ktm, f_sum, f_pro);
    const auto v1 = pointwise(f2, ktm.value(0));
    const auto v2 = pointwise(f3, ktm.value(1));
    // tsf[c][i] = sum_j V[c][j] C[i][j]; fused = gamma * tsf + raw.
    Tensor fused(f2.shape());
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t ch = 0; ch < 32; ++ch)
            for (std::size_t i = 0; i < 4; ++i) {
                double t1 = 0.0, t2 = 0.0;
                for (std::size_t j = 0; j < 4; ++j) {
                    t1 += v1[n][ch][j] * c[n][i][j];
                    t2 += v2[n][ch][j] * c[n][i][j];
                }
                const std::size_t flat = (n * 32 + ch) * 4 + i;
                EXPECT_NEAR(t.tsf1.data()[flat], t1, 1e-10);
                EXPECT_NEAR(t.tsf2.data()[flat], t2, 1e-10);
                fused.data()[flat] = 0.7 * t1 + f2.data()[flat] - 0.4 * t2 + f3.data()[flat];
            }
    const Conv2d& integ = ktm.integrate();
    const auto b = integ.bias()->value.data();
    const auto ref = naive_conv(fused, integ.weight().value, std::vector<double>(b.begin(), b.end()), 1, 1);
    for (std::size_t i = 0; i < ref.size(); ++i)
        EXPECT_NEAR(t.output.data()[i], ref[i], 1e-10);
}

TEST(KtmModes, QueryKeySources)
{
    auto build = [](ParameterSet& ps, KtmMode mode) {
        Rng rng(30);
        Ktm k(ps, "ktm", 32, mode, rng);
        randomize(ps, 130);
        return k;
    };
    ParameterSet pf, ps_, pp;
    const Ktm full = build(pf, KtmMode::full);
    const Ktm sum_only = build(ps_, KtmMode::sum_only);
    const Ktm product_only = build(pp, KtmMode::product_only);
    const Tensor f2 = random_tensor({1, 32, 3, 3}, 31), f3 = random_tensor({1, 32, 3, 3}, 32);
    auto [pro, sum] = Ktm::combine(f2, f3);
    expect_same(sum_only.model_knowledge(pro, sum), full.model_knowledge(sum, sum), 1e-15);
    expect_same(product_only.model_knowledge(pro, sum), full.model_knowledge(pro, pro), 1e-15);

    const Tensor a = full(f2, f3);
    fill(full.gamma(0), 0.5); // make the correlation matter
    fill(product_only.gamma(0), 0.5);
    const Tensor b = full(f2, f3), c = product_only(f2, f3);
    EXPECT_EQ(a.shape(), (Shape{1, 32, 3, 3}));
    EXPECT_EQ(c.shape(), a.shape());
    double diff = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
        diff = std::max(diff, std::abs(b.data()[i] - c.data()[i]));
    EXPECT_GT(diff, 1e-8);

    EXPECT_THROW((void)parse_ktm_mode("both"), std::invalid_argument);
    for (auto m : {KtmMode::full, KtmMode::sum_only, KtmMode::product_only})
        EXPECT_EQ(parse_ktm_mode(to_string(m)), m);
}

TEST(KtmInvariants, SpatialPermutationEquivariance)
{
    ParameterSet ps;
    Rng rng(33);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    randomize(ps, 133);
    fill(ktm.gamma(0), 0.6);
    fill(ktm.gamma(1), -0.8);
    // A centre-tap-only integration kernel is pointwise, so the whole module commutes with
    // spatial permutations; a general 3x3 kernel only does so up to its neighbourhood.
    Parameter& w = ktm.integrate().weight();
    for (std::size_t i = 0; i < w.value.size(); ++i)
        if (i % 9 != 4)
            w.value.data()[i] = 0.0;

    const Tensor f2 = random_tensor({1, 32, 2, 2}, 34), f3 = random_tensor({1, 32, 2, 2}, 35);
    const std::vector<std::size_t> perm{2, 0, 3, 1};
    const KtmTrace a = ktm.forward(f2, f3);
    const KtmTrace b = ktm.forward(permute_positions(f2, perm), permute_positions(f3, perm));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            EXPECT_NEAR(b.correlation.at(0, 0, i, j), a.correlation.at(0, 0, perm[i], perm[j]), 1e-14);
    expect_same(b.output, permute_positions(a.output, perm), 1e-13);
}

TEST(KtmGradients, AllModes)
{
    for (KtmMode mode : {KtmMode::full, KtmMode::sum_only, KtmMode::product_only}) {
        ParameterSet ps;
        Rng rng(36);
        Ktm ktm(ps, "ktm", 32, mode, rng);
        randomize(ps, 136);
        const Tensor f2 = random_tensor({2, 32, 3, 3}, 37), f3 = random_tensor({2, 32, 3, 3}, 38);
        const auto r = check_parameters([&] { return ktm(f2, f3); }, ps);
        EXPECT_TRUE(r.passed) << to_string(mode) << ": " << r.max_rel_error << " at " << r.worst_target;
        const auto ri = check_projected([&](const std::vector<Tensor>& in) { return ktm(in[0], in[1]); }, {f2, f3});
        EXPECT_TRUE(ri.passed) << to_string(mode) << " inputs: " << ri.max_rel_error;
    }
}

TEST(KtmErrors, ChannelChecks)
{
    ParameterSet ps;
    Rng rng(0);
    EXPECT_THROW(Ktm(ps, "odd", 31, KtmMode::full, rng), std::invalid_argument);
    Ktm ktm(ps, "ktm", 32, KtmMode::full, rng);
    EXPECT_THROW((void)ktm(Tensor(Shape{1, 16, 2, 2}), Tensor(Shape{1, 16, 2, 2})), ShapeError);
}
