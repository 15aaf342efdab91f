#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vitsom/objective.hpp"
#include "vitsom/som.hpp"

using namespace vitsom;
using objective::GammaSchedule;

TEST(GammaSchedule, LinearWarmupThenConstant) {
    GammaSchedule s(0.01, 100);
    EXPECT_DOUBLE_EQ(s.at(0), 0.0);
    EXPECT_DOUBLE_EQ(s.at(50), 0.005);
    EXPECT_DOUBLE_EQ(s.at(100), 0.01);
    EXPECT_DOUBLE_EQ(s.at(5000), 0.01);
}

TEST(GammaSchedule, ZeroWarmupIsConstant) {
    GammaSchedule s(0.005, 0);
    EXPECT_DOUBLE_EQ(s.at(0), 0.005);
    EXPECT_DOUBLE_EQ(s.at(1), 0.005);
}

TEST(GammaSchedule, NegativeGammaRejected) {
    EXPECT_THROW(GammaSchedule(-0.1, 10), ConfigError);
}

TEST(TotalLoss, WeightedSumArithmetic) {
    Tensor l_nn = Tensor::scalar(1.0);
    Tensor l_som = Tensor::scalar(4.0);
    EXPECT_DOUBLE_EQ(objective::total_loss(l_nn, l_som, 0.005).item(), 1.02);
    EXPECT_DOUBLE_EQ(objective::total_loss(l_nn, l_som, 0.0).item(), 1.0);
}

TEST(TotalLoss, NonFiniteTermNamed) {
    Tensor good = Tensor::scalar(1.0);
    Tensor bad = Tensor::scalar(std::nan(""));
    try {
        objective::total_loss(bad, good, 0.01);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("L_nn"), std::string::npos);
    }
    try {
        objective::total_loss(good, bad, 0.01);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("L_som"), std::string::npos);
    }
}

TEST(TaskLoss, ClusteringIsMse) {
    Tensor out = Tensor::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
    Tensor target = Tensor::from_data({1, 1, 2, 2}, {0, 0, 0, 0});
    Tensor l = objective::task_loss(out, target, {}, vit::Task::kClustering);
    EXPECT_DOUBLE_EQ(l.item(), 1.0);
}

TEST(TaskLoss, ClassificationUniformLogitsGiveLnC) {
    Tensor logits = Tensor::zeros({3, 10});
    Tensor l = objective::task_loss(logits, Tensor(), {0, 5, 9}, vit::Task::kClassification);
    EXPECT_NEAR(l.item(), std::log(10.0), 1e-12);
}

TEST(TotalLoss, GradientSuperposition) {
    // d(L_nn + gamma L_som)/dz must equal dL_nn/dz + gamma * dL_som/dz,
    // each measured in isolation.
    std::mt19937_64 rng(1);
    som::SomGrid g = som::SomGrid::init(3, 3, 4, som::Metric::kCosine, rng, false);
    const double gamma = 0.25;

    std::mt19937_64 rng2(2);
    Tensor z_data = Tensor::uniform({2, 4}, -1, 1, rng2);
    Tensor target = Tensor::uniform({2, 4}, -1, 1, rng2);

    auto run = [&](int mode) {
        Tensor z = Tensor::from_data({2, 4}, z_data.data(), true);
        Tape tape;
        TapeScope scope(tape);
        Tensor l_nn = ops::mse(z, target);
        Tensor l_som = som::som_loss(z, g, 1.0);
        Tensor loss = mode == 0 ? l_nn : mode == 1 ? l_som
                                                   : objective::total_loss(l_nn, l_som, gamma);
        tape.backward(loss);
        return z.grad();
    };
    auto g_nn = run(0), g_som = run(1), g_tot = run(2);
    for (std::size_t i = 0; i < g_tot.size(); ++i)
        EXPECT_NEAR(g_tot[i], g_nn[i] + gamma * g_som[i], 1e-12) << "i=" << i;
}
