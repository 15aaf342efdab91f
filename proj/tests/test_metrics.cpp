#include <gtest/gtest.h>

#include <map>
#include <random>

#include "vitsom/metrics.hpp"

using namespace vitsom;

TEST(Purity, WorkedExample) {
    // Cluster 0 holds labels {0,0,1}, cluster 1 holds {1,1}: (2+2)/5 = 0.8.
    std::vector<std::size_t> a = {0, 0, 0, 1, 1};
    std::vector<int> y = {0, 0, 1, 1, 1};
    EXPECT_DOUBLE_EQ(metrics::purity(a, y), 0.8);
}

TEST(Purity, InvariantToClusterRelabeling) {
    std::vector<std::size_t> a = {0, 0, 0, 1, 1};
    std::vector<std::size_t> b = {7, 7, 7, 3, 3};
    std::vector<int> y = {0, 0, 1, 1, 1};
    EXPECT_DOUBLE_EQ(metrics::purity(a, y), metrics::purity(b, y));
}

TEST(Purity, SingletonClustersAreAlwaysPure) {
    std::vector<std::size_t> a = {0, 1, 2, 3};
    std::vector<int> y = {3, 1, 4, 1};
    EXPECT_DOUBLE_EQ(metrics::purity(a, y), 1.0);
}

TEST(Purity, MismatchedLengthsRejected) {
    EXPECT_THROW(metrics::purity({0, 1}, {0}), ContractError);
    EXPECT_THROW(metrics::purity({}, {}), ContractError);
}

TEST(Purity, MatchesContingencyTableOnRandomInstances) {
    // Independent recount through an explicit table, 50 random instances.
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng() % 200;
        const std::size_t k = 1 + rng() % 12;
        const int labels = 2 + static_cast<int>(rng() % 9);
        std::vector<std::size_t> a(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng() % k;
            y[i] = static_cast<int>(rng() % labels);
        }
        std::map<std::pair<std::size_t, int>, std::size_t> table;
        for (std::size_t i = 0; i < n; ++i) table[{a[i], y[i]}]++;
        std::map<std::size_t, std::size_t> best;
        for (const auto& [key, c] : table) best[key.first] = std::max(best[key.first], c);
        std::size_t total = 0;
        for (const auto& [cluster, c] : best) total += c;
        EXPECT_DOUBLE_EQ(metrics::purity(a, y), static_cast<double>(total) / n) << "trial " << trial;
    }
}

TEST(TopographicError, AdjacentBmusGiveZero) {
    // Two units on a 1x2 lattice are always adjacent.
    std::mt19937_64 rng(1);
    som::SomGrid g = som::SomGrid::init(1, 2, 3, som::Metric::kCosine, rng, false);
    Tensor z = Tensor::uniform({10, 3}, -1, 1, rng);
    EXPECT_DOUBLE_EQ(metrics::topographic_error(z, g), 0.0);
}

TEST(TopographicError, EngineeredFarSecondBmu) {
    // On a 1x3 line, a sample between units 0 and 2 (unit 1 pushed away)
    // has non-adjacent top-2 BMUs.
    std::mt19937_64 rng(2);
    som::SomGrid g = som::SomGrid::init(1, 3, 2, som::Metric::kEuclidean, rng, false);
    g.prototypes = Tensor::from_data({3, 2}, {0, 0, 100, 100, 1, 1});
    Tensor z = Tensor::from_data({1, 2}, {0.4, 0.4});
    EXPECT_DOUBLE_EQ(metrics::topographic_error(z, g), 1.0);
}

TEST(TopographicError, MatchesBruteForceTopTwo) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t h = 2 + rng() % 4, w = 2 + rng() % 4, d = 2 + rng() % 5;
        som::SomGrid g = som::SomGrid::init(h, w, d, som::Metric::kCosine, rng, false);
        Tensor z = Tensor::uniform({16, d}, -1, 1, rng);
        Tensor dist = som::pairwise_distance(z, g);
        const std::size_t M = g.units();
        std::size_t errors = 0;
        for (std::size_t b = 0; b < 16; ++b) {
            std::vector<std::size_t> order(M);
            for (std::size_t m = 0; m < M; ++m) order[m] = m;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t yy) {
                return dist.data()[b * M + x] < dist.data()[b * M + yy];
            });
            const long dr = static_cast<long>(order[0] / w) - static_cast<long>(order[1] / w);
            const long dc = static_cast<long>(order[0] % w) - static_cast<long>(order[1] % w);
            if (std::labs(dr) > 1 || std::labs(dc) > 1) ++errors;
        }
        EXPECT_DOUBLE_EQ(metrics::topographic_error(z, g), static_cast<double>(errors) / 16.0)
            << "trial " << trial;
    }
}

TEST(Accuracy, PerfectAndDeranged) {
    Tensor logits = Tensor::from_data({3, 3}, {5, 0, 0, 0, 5, 0, 0, 0, 5});
    EXPECT_DOUBLE_EQ(metrics::accuracy(logits, {0, 1, 2}), 1.0);
    EXPECT_DOUBLE_EQ(metrics::accuracy(logits, {1, 2, 0}), 0.0);
}

TEST(Accuracy, TieBreaksToLowestClass) {
    Tensor logits = Tensor::from_data({1, 4}, {2, 2, 2, 2});
    EXPECT_DOUBLE_EQ(metrics::accuracy(logits, {0}), 1.0);
    EXPECT_DOUBLE_EQ(metrics::accuracy(logits, {1}), 0.0);
}

TEST(Accuracy, AffineLogitInvariance) {
    std::mt19937_64 rng(4);
    Tensor logits = Tensor::uniform({20, 10}, -2, 2, rng);
    std::vector<int> y(20);
    for (auto& v : y) v = static_cast<int>(rng() % 10);
    Tensor shifted = Tensor::zeros({20, 10});
    for (std::size_t i = 0; i < logits.numel(); ++i)
        shifted.data()[i] = 3.0 * logits.data()[i] + 7.0;  // order-preserving
    EXPECT_DOUBLE_EQ(metrics::accuracy(logits, y), metrics::accuracy(shifted, y));
}

TEST(Accuracy, RandomLogitsNearChance) {
    // Monte Carlo: 10 classes, 20000 samples; mean 0.10 within 3 sigma.
    std::mt19937_64 rng(5);
    const std::size_t n = 20000;
    Tensor logits = Tensor::uniform({n, 10}, -1, 1, rng);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng() % 10);
    EXPECT_NEAR(metrics::accuracy(logits, y), 0.10, 0.0064);
}
