#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vitsom/ops.hpp"
#include "vitsom/verify.hpp"

using namespace vitsom;

TEST(Matmul, IdentityCase) {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = ops::matmul(eye, a);
    EXPECT_EQ(out.data(), a.data());
}

TEST(Matmul, ScalarCase) {
    Tensor out = ops::matmul(Tensor::from_data({1, 1}, {2}), Tensor::from_data({1, 1}, {3}));
    EXPECT_DOUBLE_EQ(out.item(), 6.0);
}

TEST(Matmul, TwoByTwo) {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    Tensor out = ops::matmul(a, b);
    EXPECT_EQ(out.data(), (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    try {
        ops::matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[4x2]"), std::string::npos);
    }
}

TEST(Softmax, UniformInput) {
    Tensor out = ops::softmax(Tensor::from_data({3}, {0, 0, 0}), 0);
    for (double v : out.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, Singleton) {
    Tensor out = ops::softmax(Tensor::from_data({1}, {5}), 0);
    EXPECT_DOUBLE_EQ(out.item(), 1.0);
}

TEST(Softmax, ShiftInvariance) {
    std::mt19937_64 rng(3);
    Tensor x = Tensor::uniform({7}, -2, 2, rng);
    Tensor shifted = ops::add_scalar(x, 13.7);
    Tensor a = ops::softmax(x, 0), b = ops::softmax(shifted, 0);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-14);
}

TEST(Softmax, RowsSumToOne) {
    std::mt19937_64 rng(4);
    Tensor x = Tensor::uniform({8, 11}, -5, 5, rng);
    Tensor y = ops::softmax(x, 1);
    for (std::size_t r = 0; r < 8; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 11; ++c) s += y.data()[r * 11 + c];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Softmax, AxisOutOfRange) {
    EXPECT_THROW(ops::softmax(Tensor::zeros({2, 2}), 2), DimensionError);
}

TEST(LayerNorm, ConstantRowCollapsesToBias) {
    Tensor x = Tensor::from_data({2, 3}, {5, 5, 5, -1, -1, -1});
    Tensor g = Tensor::full({3}, 1.0);
    Tensor b = Tensor::from_data({3}, {0.5, -0.5, 2.0});
    Tensor out = ops::layer_norm(x, g, b, 1e-5);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out.data()[r * 3 + c], b.data()[c], 1e-9);
}

TEST(LayerNorm, HandComputedTwoElement) {
    // x=[1,3]: mean 2, var 1 -> approximately [-1, +1] with eps damping.
    Tensor out = ops::layer_norm(Tensor::from_data({1, 2}, {1, 3}), Tensor::full({2}, 1.0),
                                 Tensor::zeros({2}), 1e-5);
    EXPECT_NEAR(out.data()[0], -0.999995, 1e-6);
    EXPECT_NEAR(out.data()[1], 0.999995, 1e-6);
}

TEST(LayerNorm, ZeroGainRecoversBias) {
    std::mt19937_64 rng(5);
    Tensor x = Tensor::uniform({3, 4}, -1, 1, rng);
    Tensor b = Tensor::from_data({4}, {1, 2, 3, 4});
    Tensor out = ops::layer_norm(x, Tensor::zeros({4}), b, 1e-5);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(out.data()[r * 4 + c], b.data()[c]);
}

TEST(LayerNorm, RejectsNonPositiveEps) {
    EXPECT_THROW(
        ops::layer_norm(Tensor::zeros({1, 2}), Tensor::zeros({2}), Tensor::zeros({2}), 0.0),
        ConfigError);
}

// Independent oracle for Phi(x): Gauss-Legendre style quadrature of the
// normal pdf, no erf involved.
static double phi_quadrature(double x) {
    const int n = 20000;
    const double lo = -12.0;
    const double h = (x - lo) / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = lo + i * h;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        s += w * std::exp(-0.5 * t * t);
    }
    return s * h * 0.3989422804014327;
}

TEST(Gelu, ZeroAndSaturation) {
    EXPECT_DOUBLE_EQ(ops::gelu(Tensor::scalar(0.0)).item(), 0.0);
    EXPECT_NEAR(ops::gelu(Tensor::scalar(10.0)).item(), 10.0, 1e-9);
}

TEST(Gelu, MatchesQuadratureOracle) {
    for (double x : {-2.0, -0.5, 0.3, 1.0, 2.5}) {
        const double expected = x * phi_quadrature(x);
        EXPECT_NEAR(ops::gelu(Tensor::scalar(x)).item(), expected, 1e-7) << "x=" << x;
    }
    // Frozen value for gelu(1) from the quadrature oracle.
    EXPECT_NEAR(ops::gelu(Tensor::scalar(1.0)).item(), 0.841345, 1e-6);
}

TEST(CrossEntropy, UniformLogits) {
    Tensor logits = Tensor::zeros({4, 10});
    Tensor loss = ops::cross_entropy(logits, {0, 3, 7, 9});
    EXPECT_NEAR(loss.item(), std::log(10.0), 1e-12);
}

TEST(CrossEntropy, LabelOutOfRange) {
    EXPECT_THROW(ops::cross_entropy(Tensor::zeros({1, 3}), {5}), DataError);
}

TEST(Mse, AllZerosVsAllOnes) {
    EXPECT_DOUBLE_EQ(ops::mse(Tensor::zeros({2, 8}), Tensor::full({2, 8}, 1.0)).item(), 1.0);
}

TEST(GradCheck, MatmulChainAgainstFiniteDifferences) {
    std::mt19937_64 rng(11);
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({4, 5}, -1, 1, rng, true);
    Tensor c = Tensor::uniform({5, 2}, -1, 1, rng, true);
    auto f = [](const std::vector<Tensor>& in) {
        return ops::sum(ops::gelu(ops::matmul(ops::matmul(in[0], in[1]), in[2])));
    };
    auto r = verify::gradcheck(f, {a, b, c});
    EXPECT_TRUE(r.ok) << r.worst;
    EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(GradCheck, AllOpsHundredRandomTrials) {
    auto res = verify::check_op_gradients(100, 2024);
    EXPECT_TRUE(res.passed) << res.detail;
}
