#include "support.hpp"

#include "gelenet/tensor.hpp"

using namespace gelenet;
using gelenet::test::random_tensor;

TEST(Tensor, ConstructionAndIndexing)
{
    Tensor t(Shape{2, 3, 4, 5}, 1.5);
    EXPECT_EQ(t.size(), 120u);
    EXPECT_EQ(t.shape().plane(), 20u);
    t.at(1, 2, 3, 4) = 7.0;
    EXPECT_EQ(t.data().back(), 7.0);
    EXPECT_FALSE(t.requires_grad());
    EXPECT_FALSE(t.has_grad());
    EXPECT_THROW(Tensor(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    EXPECT_THROW((void)t.item(), ShapeError);
    EXPECT_DOUBLE_EQ(Tensor::scalar(3.25).item(), 3.25);
}

TEST(Tensor, CopiesShareStorageButCloneDoesNot)
{
    Tensor a(Shape{1, 1, 1, 2}, 1.0);
    Tensor b = a;
    b.data()[0] = 5.0;
    EXPECT_EQ(a.data()[0], 5.0);
    EXPECT_TRUE(a.same_storage(b));
    Tensor c = a.clone();
    c.data()[0] = 9.0;
    EXPECT_EQ(a.data()[0], 5.0);
    EXPECT_FALSE(c.same_storage(a));
}

TEST(Tape, NothingIsRecordedWithoutActiveTapeOrGradients)
{
    Tensor x = random_tensor({1, 1, 2, 2}, 1, -1, 1, true);
    (void)ops::sum(x);
    Tape tape;
    {
        Tape::Scope scope(tape);
        Tensor y = random_tensor({1, 1, 2, 2}, 2);
        (void)ops::sum(y); // no input requires a gradient
        EXPECT_EQ(tape.size(), 0u);
        (void)ops::sum(x);
        EXPECT_EQ(tape.size(), 1u);
    }
    EXPECT_EQ(Tape::active(), nullptr);
}

TEST(Backward, SumGivesOnes)
{
    Tensor x = random_tensor({2, 3, 2, 2}, 3, -1, 1, true);
    Tape tape;
    Tape::Scope scope(tape);
    backward(ops::sum(x));
    for (double g : x.grad())
        EXPECT_EQ(g, 1.0);
    EXPECT_EQ(tape.size(), 0u) << "tape is cleared after backward";
}

TEST(Backward, HalfSquaredNormGivesX)
{
    Tensor x = random_tensor({1, 2, 3, 3}, 4, -1, 1, true);
    Tape tape;
    Tape::Scope scope(tape);
    backward(ops::scale(ops::sum(ops::mul(x, x)), 0.5));
    for (std::size_t i = 0; i < x.size(); ++i)
        EXPECT_DOUBLE_EQ(x.grad()[i], x.data()[i]);
}

TEST(Backward, GradientsAccumulateAcrossUses)
{
    Tensor x = random_tensor({1, 1, 2, 2}, 5, -1, 1, true);
    Tape tape;
    Tape::Scope scope(tape);
    backward(ops::sum(ops::add(x, ops::scale(x, 2.0))));
    for (double g : x.grad())
        EXPECT_DOUBLE_EQ(g, 3.0);
}

TEST(Backward, Errors)
{
    Tensor x = random_tensor({1, 1, 2, 2}, 6, -1, 1, true);
    Tape tape;
    Tape::Scope scope(tape);
    EXPECT_THROW(backward(ops::scale(x, 2.0)), AutodiffError) << "non-scalar loss";
    tape.clear();
    Tensor loss = ops::sum(x);
    backward(loss);
    EXPECT_THROW(backward(loss), AutodiffError) << "second backward without a new forward";
}

TEST(Backward, WithoutTapeThrows)
{
    Tensor x = random_tensor({1, 1, 1, 1}, 7, -1, 1, true);
    EXPECT_THROW(backward(ops::sum(x)), AutodiffError);
}

TEST(Backward, FaultHookScalesNamedOp)
{
    Tensor x = random_tensor({1, 1, 2, 2}, 8, -1, 1, true);
    gelenet::testing::set_backward_fault("sigmoid", 2.0);
    {
        Tape tape;
        Tape::Scope scope(tape);
        backward(ops::sum(ops::sigmoid(x)));
    }
    gelenet::testing::set_backward_fault("", 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-x.data()[i]));
        EXPECT_NEAR(x.grad()[i], 2.0 * s * (1 - s), 1e-15);
    }
}
