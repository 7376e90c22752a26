#include "metahdr/autograd.hpp"
#include "metahdr/ops.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace metahdr;
using TD = Tensor<double>;

namespace {

TD s(double v) { return TD::scalar(v); }

TD grad1(const TD& out, const TD& x, bool create_graph = false) {
    return backward(out, std::span<const TD>(&x, 1), create_graph).values[0];
}

}  // namespace

TEST(Autograd, SquareGradient) {
    const auto x = s(3.0).leaf();
    EXPECT_DOUBLE_EQ(grad1(mul(x, x), x).item(), 6.0);
}

TEST(Autograd, SecondDerivativeOfCube) {
    const auto x = s(2.0).leaf();
    const auto g = grad1(pow_scalar(x, 3.0), x, true);
    EXPECT_DOUBLE_EQ(g.item(), 12.0);
    ASSERT_TRUE(g.requires_grad());
    EXPECT_DOUBLE_EQ(grad1(g, x).item(), 12.0);
}

TEST(Autograd, ThirdDerivative) {
    const auto x = s(1.5).leaf();
    const auto g1 = grad1(pow_scalar(x, 4.0), x, true);
    const auto g2 = grad1(g1, x, true);
    const auto g3 = grad1(g2, x);
    EXPECT_NEAR(g1.item(), 4 * 1.5 * 1.5 * 1.5, 1e-12);
    EXPECT_NEAR(g2.item(), 12 * 1.5 * 1.5, 1e-12);
    EXPECT_NEAR(g3.item(), 24 * 1.5, 1e-12);
}

TEST(Autograd, WithoutCreateGraphGradientsAreConstants) {
    const auto x = s(2.0).leaf();
    const auto g = grad1(pow_scalar(x, 3.0), x, false);
    EXPECT_FALSE(g.requires_grad());
}

TEST(Autograd, NonScalarOutputIsContractError) {
    const auto x = TD({2}, {1.0, 2.0}).leaf();
    EXPECT_THROW(grad1(mul(x, x), x), ContractError);
}

TEST(Autograd, DetachedTargetGetsZeroAndFlag) {
    const auto x = s(2.0).leaf();
    const auto c = TD({2}, {1.0, 2.0});
    const std::vector<TD> wrt{x, c};
    const auto g = backward(mul(x, x), std::span<const TD>(wrt), false);
    ASSERT_EQ(g.values.size(), 2u);
    EXPECT_FALSE(g.detached[0]);
    EXPECT_TRUE(g.detached[1]);
    EXPECT_TRUE(g.any_detached());
    EXPECT_EQ(g.values[1].shape(), c.shape());
    EXPECT_EQ(g.values[1].to_vector(), std::vector<double>({0.0, 0.0}));
}

TEST(Autograd, UnreachedLeafGetsZeroWithoutFlag) {
    const auto x = s(2.0).leaf();
    const auto y = s(5.0).leaf();
    const std::vector<TD> wrt{x, y};
    const auto g = backward(mul(x, x), std::span<const TD>(wrt), false);
    EXPECT_FALSE(g.detached[1]);
    EXPECT_DOUBLE_EQ(g.values[1].item(), 0.0);
}

TEST(Autograd, GradientWrtIntermediate) {
    const auto x = s(3.0).leaf();
    const auto y = scale(x, 2.0);
    const auto z = mul(y, y);  // dz/dy = 2y = 12
    EXPECT_DOUBLE_EQ(grad1(z, y).item(), 12.0);
}

TEST(Autograd, SharedSubexpressionAccumulates) {
    const auto x = s(1.5).leaf();
    const auto y = mul(x, x);
    const auto z = add(y, mul(y, x));  // x^2 + x^3
    EXPECT_NEAR(grad1(z, x).item(), 2 * 1.5 + 3 * 1.5 * 1.5, 1e-12);
}

TEST(Autograd, NoGradDisablesRecording) {
    const auto x = s(2.0).leaf();
    {
        NoGradGuard guard;
        EXPECT_FALSE(GradMode::enabled());
        EXPECT_FALSE(mul(x, x).requires_grad());
    }
    EXPECT_TRUE(GradMode::enabled());
    EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Autograd, GradModeIsPerThread) {
    NoGradGuard guard;
    bool other = false;
    std::thread t([&] { other = GradMode::enabled(); });
    t.join();
    EXPECT_TRUE(other);
    EXPECT_FALSE(GradMode::enabled());
}

TEST(Autograd, OpsLeaveInputsUntouched) {
    std::mt19937_64 rng(3);
    const auto a = test::random_tensor({1, 2, 4, 4}, rng).leaf();
    const auto w = test::random_tensor({3, 2, 3, 3}, rng).leaf();
    const auto b = test::random_tensor({3}, rng).leaf();
    const auto before_a = a.to_vector();
    const auto before_w = w.to_vector();
    const auto out = sum(relu(conv2d(a, w, b, 1)));
    const std::vector<TD> wrt{a, w, b};
    backward(out, std::span<const TD>(wrt), true);
    EXPECT_EQ(a.to_vector(), before_a);
    EXPECT_EQ(w.to_vector(), before_w);
}

TEST(Autograd, NonFiniteResultThrows) {
    EXPECT_THROW(div(s(1.0), s(0.0)), NumericError);
    EXPECT_THROW(pow_scalar(s(-1.0), 0.5), NumericError);
}

TEST(FdGradient, SumIsExactlyOnes) {
    std::mt19937_64 rng(5);
    const auto x = test::random_tensor({2, 3}, rng);
    const auto g = fd_gradient<double>([](const TD& t) { return sum(t).item(); }, x, 1e-4);
    for (double v : g.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(FdGradient, SquareAtThree) {
    const auto g = fd_gradient<double>([](const TD& t) { return mul(t, t).item(); }, s(3.0), 1e-4);
    EXPECT_NEAR(g.item(), 6.0, 1e-6);
}

TEST(FdGradient, RunsWithoutRecording) {
    bool recorded = true;
    fd_gradient<double>(
        [&](const TD& t) {
            recorded = GradMode::enabled();
            return sum(t).item();
        },
        s(1.0), 1e-4);
    EXPECT_FALSE(recorded);
}

TEST(FdGradient, RejectsNonPositiveStep) {
    EXPECT_THROW(fd_gradient<double>([](const TD& t) { return t.item(); }, s(1.0), 0.0), ContractError);
}

TEST(Tensor, ShapeValidation) {
    EXPECT_THROW(TD({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    EXPECT_THROW(TD({1, 1, 1, 1, 1}, {1.0}), DimensionError);
    EXPECT_THROW(TD({0}, {}), DimensionError);
    EXPECT_THROW(TD({2}, {1.0, 2.0}).item(), ContractError);
}

TEST(Tensor, CopiesShareImmutableStorage) {
    const auto a = TD({2}, {1.0, 2.0});
    const auto b = a.leaf();
    EXPECT_EQ(a.values().data(), b.values().data());
    EXPECT_FALSE(a.requires_grad());
    EXPECT_TRUE(b.requires_grad());
    EXPECT_FALSE(b.detach().requires_grad());
}
