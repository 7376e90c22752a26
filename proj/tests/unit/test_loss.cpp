#include "metahdr/autograd.hpp"
#include "metahdr/gradcheck.hpp"
#include "metahdr/loss.hpp"
#include "metahdr/ops.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace metahdr;
using TD = Tensor<double>;

namespace {

LossConfig lam(double lambda) {
    LossConfig c;
    c.lambda = lambda;
    return c;
}

// Direct per-pixel evaluation of the l1 + colour-cosine loss for one image.
double loss_oracle(const TD& p, const TD& t, double lambda, double eps) {
    const auto H = p.dim(2), W = p.dim(3), plane = H * W;
    double l1 = 0.0, cos_sum = 0.0;
    for (std::int64_t i = 0; i < 3 * plane; ++i) l1 += std::abs(p.values()[i] - t.values()[i]);
    for (std::int64_t i = 0; i < plane; ++i) {
        double dot = 0, pp = 0, tt = 0;
        for (int c = 0; c < 3; ++c) {
            const double a = p.values()[c * plane + i], b = t.values()[c * plane + i];
            dot += a * b;
            pp += a * a;
            tt += b * b;
        }
        cos_sum += dot / std::sqrt(std::max(pp * tt, eps * eps));
    }
    return l1 / double(3 * plane) + lambda * (1.0 - cos_sum / double(plane));
}

}  // namespace

TEST(Loss, IdenticalImagesGiveZero) {
    std::mt19937_64 rng(1);
    const auto t = test::random_tensor({1, 3, 4, 5}, rng, 0.05, 1.0);
    EXPECT_NEAR(expandnet_loss(t, t, lam(5)).item(), 0.0, 1e-12);
}

TEST(Loss, ParallelScaledPrediction) {
    const auto t = TD::full({1, 3, 2, 2}, 0.25);
    const auto p = scale(t, 2.0);
    EXPECT_NEAR(expandnet_loss(p, t, lam(1)).item(), 0.25, 1e-9);
}

TEST(Loss, OrthogonalPixel) {
    const auto p = TD({1, 3, 1, 1}, {1, 0, 0});
    const auto t = TD({1, 3, 1, 1}, {0, 1, 0});
    EXPECT_NEAR(expandnet_loss(p, t, lam(1)).item(), 5.0 / 3.0, 1e-9);
}

TEST(Loss, BlackPixelsStayFinite) {
    const auto z = TD::zeros({1, 3, 2, 2});
    const auto l = expandnet_loss(z, z, lam(5));
    EXPECT_TRUE(std::isfinite(l.item()));
    const auto p = z.leaf();
    const auto g = backward(expandnet_loss(p, TD::full({1, 3, 2, 2}, 0.5), lam(5)), std::span<const TD>(&p, 1));
    for (double v : g.values[0].values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Loss, MatchesDirectEvaluation) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const auto p = test::random_tensor({1, 3, 3, 4}, rng, 0.0, 1.0);
        const auto t = test::random_tensor({1, 3, 3, 4}, rng, 0.0, 1.0);
        EXPECT_NEAR(expandnet_loss(p, t, lam(5)).item(), loss_oracle(p, t, 5, 1e-8), 1e-12);
    }
}

TEST(Loss, BatchIsMeanOfImages) {
    std::mt19937_64 rng(3);
    const auto p = test::random_tensor({2, 3, 2, 2}, rng, 0.0, 1.0);
    const auto t = test::random_tensor({2, 3, 2, 2}, rng, 0.0, 1.0);
    auto part = [](const TD& x, int n) {
        return TD({1, 3, 2, 2}, std::vector<double>(x.values().begin() + 12 * n, x.values().begin() + 12 * (n + 1)));
    };
    const double expected =
        0.5 * (loss_oracle(part(p, 0), part(t, 0), 5, 1e-8) + loss_oracle(part(p, 1), part(t, 1), 5, 1e-8));
    EXPECT_NEAR(expandnet_loss(p, t, lam(5)).item(), expected, 1e-12);
}

TEST(Loss, NonNegativeAndZeroOnlyWhenEqual) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = test::random_tensor({1, 3, 2, 3}, rng, 0.01, 1.0);
        const auto t = test::random_tensor({1, 3, 2, 3}, rng, 0.01, 1.0);
        EXPECT_GT(expandnet_loss(p, t, lam(5)).item(), 0.0);
    }
}

TEST(Loss, CosineTermInvariantToPositivePixelScaling) {
    std::mt19937_64 rng(5);
    const auto p = test::random_tensor({1, 3, 2, 2}, rng, 0.1, 1.0);
    const auto t = test::random_tensor({1, 3, 2, 2}, rng, 0.1, 1.0);
    // Per-pixel positive factors applied to every channel of that pixel.
    std::vector<double> k{0.5, 2.0, 3.0, 0.25};
    auto sv = p.to_vector();
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i) sv[c * 4 + i] *= k[i];
    const TD scaled({1, 3, 2, 2}, sv);
    auto cos_term = [&](const TD& x) {
        return expandnet_loss(x, t, lam(1)).item() - expandnet_loss(x, t, lam(0)).item();
    };
    EXPECT_NEAR(cos_term(scaled), cos_term(p), 1e-12);
}

TEST(Loss, ShapeMismatch) {
    EXPECT_THROW(expandnet_loss(TD::zeros({1, 3, 2, 2}), TD::zeros({1, 3, 2, 3}), lam(5)), DimensionError);
    EXPECT_THROW(expandnet_loss(TD::zeros({1, 2, 2, 2}), TD::zeros({1, 2, 2, 2}), lam(5)), DimensionError);
}

TEST(Loss, ConfigValidation) {
    EXPECT_THROW(lam(-1).validate(), ConfigError);
    LossConfig c;
    c.eps = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(6);
    const std::vector<TD> inputs{test::random_tensor({1, 3, 3, 3}, rng, 0.1, 1.0),
                                 test::random_tensor({1, 3, 3, 3}, rng, 0.1, 1.0)};
    const ScalarFn f = [](std::span<const TD> x) { return expandnet_loss(x[0], x[1], lam(5)); };
    EXPECT_LE(gradient_error(f, inputs, 1e-4), 1e-5);
    EXPECT_LE(gradient_error(directional_gradient(f, {inputs[0], inputs[1]}), inputs, 1e-4), 1e-4);
}
