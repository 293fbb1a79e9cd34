#include "support.hpp"

#include "gelenet/model.hpp"
#include "gelenet/optim.hpp"
#include "golden/golden.hpp"

#include <filesystem>
#include <fstream>

using namespace gelenet;
using namespace gelenet::test;

namespace {

void set_grad(Parameter& p, const std::vector<double>& g)
{
    auto buf = p.value.ensure_grad();
    std::copy(g.begin(), g.end(), buf.begin());
}

std::filesystem::path temp_path(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "gelenet_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(Adam, FirstStepMovesByLearningRate)
{
    ParameterSet ps;
    Parameter& p = ps.create("w", Shape{1, 1, 1, 3}, 0.0);
    set_grad(p, {3.0, -0.01, 250.0});
    adam_step(ps, AdamOptions{0.01});
    // Bias correction makes the first step lr * g / (|g| + eps).
    EXPECT_NEAR(p.value.data()[0], -0.01, 1e-10);
    EXPECT_NEAR(p.value.data()[1], 0.01, 1e-7);
    EXPECT_NEAR(p.value.data()[2], -0.01, 1e-10);
    EXPECT_EQ(p.step_count, 1);
    EXPECT_FALSE(p.value.has_grad());
}

TEST(Adam, ZeroGradientLeavesValue)
{
    ParameterSet ps;
    Parameter& p = ps.create("w", Shape{1, 1, 1, 2}, 0.75);
    set_grad(p, {0.0, 0.0});
    adam_step(ps, AdamOptions{});
    EXPECT_EQ(p.value.data()[0], 0.75);
    EXPECT_EQ(p.value.data()[1], 0.75);
    EXPECT_EQ(p.step_count, 1);
}

TEST(Adam, MatchesReferenceTrace)
{
    ParameterSet ps;
    Parameter& p = ps.create("x", Shape{1, 1, 1, 3}, 0.0);
    const std::vector<double> x0{1.0, -2.0, 0.5}, c{1.0, 2.0, 3.0};
    std::copy(x0.begin(), x0.end(), p.value.data().begin());
    for (const auto& expected : golden::kAdamTrace) {
        std::vector<double> g(3);
        for (std::size_t i = 0; i < 3; ++i)
            g[i] = c[i] * p.value.data()[i];
        set_grad(p, g);
        adam_step(ps, AdamOptions{0.1});
        expect_all_near(p.value, expected, 1e-10);
    }
}

TEST(Adam, MissingGradientThrows)
{
    ParameterSet ps;
    ps.create("a", Shape{1, 1, 1, 1}, 1.0);
    Parameter& b = ps.create("b", Shape{1, 1, 1, 1}, 1.0);
    set_grad(b, {1.0});
    EXPECT_THROW(adam_step(ps, AdamOptions{}), AutodiffError);
    // Nothing moved: the check happens before any update.
    EXPECT_EQ(b.value.data()[0], 1.0);
    EXPECT_EQ(b.step_count, 0);
}

TEST(Adam, MaskReappliedAfterStep)
{
    ParameterSet ps;
    Parameter& p = ps.create("w", Shape{1, 1, 1, 2}, 1.0);
    p.mask = std::vector<double>{1.0, 0.0};
    p.apply_mask();
    set_grad(p, {0.5, 0.5});
    adam_step(ps, AdamOptions{0.1});
    EXPECT_EQ(p.value.data()[1], 0.0);
    EXPECT_LT(p.value.data()[0], 1.0);
}

TEST(StepDecay, Schedule)
{
    EXPECT_DOUBLE_EQ(step_decay_lr(1e-4, 0.1, 30, 0), 1e-4);
    EXPECT_DOUBLE_EQ(step_decay_lr(1e-4, 0.1, 30, 29), 1e-4);
    EXPECT_DOUBLE_EQ(step_decay_lr(1e-4, 0.1, 30, 30), 1e-5);
    EXPECT_DOUBLE_EQ(step_decay_lr(1e-4, 0.1, 30, 44), 1e-5);
    EXPECT_NEAR(step_decay_lr(1e-4, 0.1, 30, 60), 1e-6, 1e-20);
    EXPECT_DOUBLE_EQ(step_decay_lr(1e-4, 0.1, 0, 100), 1e-4);
}

TEST(Checkpoint, RoundTripIsExact)
{
    GeleNet a(ModelConfig::full(), 3);
    GeleNet b(ModelConfig::full(), 4);
    const auto path = temp_path("roundtrip.bin");
    save_checkpoint(a.parameters(), path);
    load_checkpoint(b.parameters(), path);
    for (const auto& p : a.parameters()) {
        const Parameter& q = b.parameters().get(p->name);
        ASSERT_EQ(p->value.shape(), q.value.shape());
        for (std::size_t i = 0; i < p->value.size(); ++i)
            ASSERT_EQ(p->value.data()[i], q.value.data()[i]) << p->name;
    }
    const Tensor x = random_tensor({1, 3, 64, 64}, 5, 0, 1);
    expect_same(a.predict(x), b.predict(x));
}

TEST(Checkpoint, RejectsMismatches)
{
    GeleNet full(ModelConfig::full(), 1);
    GeleNet base(ModelConfig::baseline(), 1);
    const auto full_path = temp_path("full.bin");
    const auto base_path = temp_path("base.bin");
    save_checkpoint(full.parameters(), full_path);
    save_checkpoint(base.parameters(), base_path);
    EXPECT_THROW(load_checkpoint(base.parameters(), full_path), CheckpointError); // extra records
    EXPECT_THROW(load_checkpoint(full.parameters(), base_path), CheckpointError); // missing parameters

    BackboneConfig wide;
    wide.stub_channels = {16, 32, 48, 96};
    GeleNet other(ModelConfig::full(wide), 1);
    EXPECT_THROW(load_checkpoint(other.parameters(), full_path), CheckpointError); // shape mismatch

    const auto junk = temp_path("junk.bin");
    std::ofstream(junk) << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(full.parameters(), junk), CheckpointError);
    EXPECT_THROW(load_checkpoint(full.parameters(), temp_path("absent.bin")), CheckpointError);

    const auto size = std::filesystem::file_size(full_path);
    std::filesystem::copy_file(full_path, temp_path("cut.bin"), std::filesystem::copy_options::overwrite_existing);
    std::filesystem::resize_file(temp_path("cut.bin"), size - 16);
    EXPECT_THROW(load_checkpoint(full.parameters(), temp_path("cut.bin")), CheckpointError);
}

TEST(Parameters, NamesAreUnique)
{
    ParameterSet ps;
    ps.create("a", Shape{1, 1, 1, 1});
    EXPECT_THROW(ps.create("a", Shape{1, 1, 1, 1}), std::invalid_argument);
    EXPECT_THROW(ps.get("missing"), std::out_of_range);
    EXPECT_EQ(ps.find("missing"), nullptr);
}
