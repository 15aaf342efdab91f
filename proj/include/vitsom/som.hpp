#pragma once

#include <cmath>
#include <cstddef>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "vitsom/ops.hpp"
#include "vitsom/tensor.hpp"

namespace vitsom::som {

enum class Metric { kCosine, kEuclidean, kManhattan };

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::kCosine: return "cosine";
        case Metric::kEuclidean: return "euclidean";
        case Metric::kManhattan: return "manhattan";
    }
    return "?";
}

inline Metric metric_from_name(const std::string& s) {
    if (s == "cosine") return Metric::kCosine;
    if (s == "euclidean") return Metric::kEuclidean;
    if (s == "manhattan") return Metric::kManhattan;
    throw ConfigError("unknown SOM metric '" + s + "'");
}

// H x W lattice of prototype vectors. Unit index = row * W + col.
struct SomGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t dim = 0;
    Metric metric = Metric::kCosine;
    Tensor prototypes;  // [M, dim]

    std::size_t units() const { return height * width; }

    static SomGrid init(std::size_t h, std::size_t w, std::size_t dim, Metric metric,
                        std::mt19937_64& rng, bool trainable = true) {
        SomGrid g;
        g.height = h;
        g.width = w;
        g.dim = dim;
        g.metric = metric;
        // Small symmetric init; avoids degenerate cosine directions.
        g.prototypes = Tensor::uniform({h * w, dim}, -0.05, 0.05, rng, trainable);
        return g;
    }
};

// Squared Euclidean distance between lattice coordinates of two units.
inline double grid_distance_sq(const SomGrid& g, std::size_t i, std::size_t j) {
    const std::size_t M = g.units();
    if (i >= M || j >= M)
        throw ContractError("grid_distance_sq: unit index out of range (M=" + std::to_string(M) +
                            ", i=" + std::to_string(i) + ", j=" + std::to_string(j) + ")");
    const double dr = static_cast<double>(i / g.width) - static_cast<double>(j / g.width);
    const double dc = static_cast<double>(i % g.width) - static_cast<double>(j % g.width);
    return dr * dr + dc * dc;
}

struct TemperatureSchedule {
    double t_max = 1.0;
    double t_min = 0.001;
    std::size_t total_steps = 1;  // K

    TemperatureSchedule() = default;
    TemperatureSchedule(double tmax, double tmin, std::size_t k) {
        if (!(tmax >= tmin) || !(tmin > 0.0) || k < 1)
            throw ConfigError("temperature schedule requires T_max >= T_min > 0 and K >= 1");
        t_max = tmax;
        t_min = tmin;
        total_steps = k;
    }

    // Half the map side length; the conventional starting width.
    static TemperatureSchedule for_map(std::size_t h, std::size_t w, std::size_t k,
                                       double tmin = 0.001) {
        return TemperatureSchedule(static_cast<double>(std::max(h, w)) / 2.0, tmin, k);
    }
};

// Geometric interpolation T(k) = T_max * (T_min/T_max)^(k/K); k > K clamps.
inline double temperature(std::size_t k, const TemperatureSchedule& s) {
    if (k >= s.total_steps) return s.t_min;
    const double frac = static_cast<double>(k) / static_cast<double>(s.total_steps);
    return s.t_max * std::pow(s.t_min / s.t_max, frac);
}

// Gaussian neighborhood h_j = exp(-grid_dist_sq(j, bmu) / (2 T^2)).
inline std::vector<double> neighborhood_weights(const SomGrid& g, std::size_t bmu, double t) {
    const std::size_t M = g.units();
    if (bmu >= M) throw ContractError("neighborhood_weights: bmu out of range");
    std::vector<double> h(M);
    const double denom = 2.0 * t * t;
    for (std::size_t j = 0; j < M; ++j)
        h[j] = std::exp(-grid_distance_sq(g, j, bmu) / denom);
    return h;
}

namespace detail_som {
inline bool& zero_norm_warned() {
    static bool warned = false;
    return warned;
}
}  // namespace detail_som

// Pairwise sample-to-prototype distances under the grid's metric; on the
// tape, so gradients flow to both z and the prototypes.
//   cosine:    1 - z.w / (|z||w|), range [0, 2]; zero-norm vectors get 1.
//   euclidean: |z - w|^2 (the Eq. 4 / Eq. 1 equivalence holds in this form).
//   manhattan: sum |z_k - w_k|.
inline Tensor pairwise_distance(const Tensor& z, const SomGrid& g) {
    if (z.rank() != 2 || z.dim(1) != g.dim)
        throw DimensionError("pairwise_distance: z " + shape_str(z.shape()) +
                             " vs prototype dim " + std::to_string(g.dim));
    switch (g.metric) {
        case Metric::kEuclidean:
            return ops::pairwise_sqeuclidean(z, g.prototypes);
        case Metric::kManhattan:
            return ops::pairwise_manhattan(z, g.prototypes);
        case Metric::kCosine: {
            bool zero_norm = false;
            for (std::size_t b = 0; b < z.dim(0) && !zero_norm; ++b) {
                double s = 0.0;
                for (std::size_t j = 0; j < g.dim; ++j) {
                    const double v = z.data()[b * g.dim + j];
                    s += v * v;
                }
                zero_norm = (s == 0.0);
            }
            if (zero_norm && !detail_som::zero_norm_warned()) {
                detail_som::zero_norm_warned() = true;
                std::cerr << "[vitsom] warning: zero-norm vector under cosine metric; "
                             "distance defined as 1\n";
            }
            Tensor zn = ops::l2_normalize_rows(z);
            Tensor pn = ops::l2_normalize_rows(g.prototypes);
            Tensor sim = ops::matmul(zn, ops::transpose_last2(pn));
            return ops::add_scalar(ops::scale(sim, -1.0), 1.0);
        }
    }
    throw ContractError("pairwise_distance: unreachable");
}

// Per-sample argmin over units; ties break to the lowest flat index.
inline std::vector<std::size_t> find_bmu(const Tensor& distances) {
    if (distances.rank() != 2)
        throw DimensionError("find_bmu: expected [B, M], got " + shape_str(distances.shape()));
    const std::size_t B = distances.dim(0), M = distances.dim(1);
    std::vector<std::size_t> bmu(B);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t best = 0;
        double bestd = distances.data()[b * M];
        if (std::isnan(bestd))
            throw NumericError("find_bmu: NaN distance at sample " + std::to_string(b));
        for (std::size_t m = 1; m < M; ++m) {
            const double d = distances.data()[b * M + m];
            if (std::isnan(d))
                throw NumericError("find_bmu: NaN distance at sample " + std::to_string(b));
            if (d < bestd) {
                bestd = d;
                best = m;
            }
        }
        bmu[b] = best;
    }
    return bmu;
}

// Batch SOM loss: (1/N) sum_i sum_j h(BMU_i, j) * d_ij. Neighborhood weights
// are constants; no gradient flows through BMU selection.
inline Tensor som_loss(const Tensor& z, const SomGrid& g, double t) {
    if (z.rank() != 2 || z.dim(0) == 0)
        throw ContractError("som_loss: empty batch");
    const std::size_t B = z.dim(0), M = g.units();
    Tensor dist = pairwise_distance(z, g);
    std::vector<std::size_t> bmu = find_bmu(dist);
    Tensor weights = Tensor::zeros({B, M});
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<double> h = neighborhood_weights(g, bmu[b], t);
        std::copy(h.begin(), h.end(), weights.data().begin() + b * M);
    }
    Tensor weighted = ops::mul(dist, weights);
    return ops::scale(ops::sum(weighted), 1.0 / static_cast<double>(B));
}

// Classic sequential Kohonen update, kept as a verification oracle:
// p_j <- p_j + alpha * h_j * (z - p_j) with h centered at the Euclidean BMU.
inline void classic_update(const std::vector<double>& z, SomGrid& g, double alpha, double t) {
    const std::size_t M = g.units(), d = g.dim;
    if (z.size() != d) throw DimensionError("classic_update: sample dim mismatch");
    std::size_t best = 0;
    double bestd = std::numeric_limits<double>::infinity();
    auto& p = g.prototypes.data();
    for (std::size_t m = 0; m < M; ++m) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = z[j] - p[m * d + j];
            s += diff * diff;
        }
        if (s < bestd) {
            bestd = s;
            best = m;
        }
    }
    const double denom = 2.0 * t * t;
    const std::size_t br = best / g.width, bc = best % g.width;
    for (std::size_t m = 0; m < M; ++m) {
        const double dr = static_cast<double>(m / g.width) - static_cast<double>(br);
        const double dc = static_cast<double>(m % g.width) - static_cast<double>(bc);
        const double h = std::exp(-(dr * dr + dc * dc) / denom);
        const double ah = alpha * h;
        if (ah < 1e-14) continue;  // negligible move; keeps far-unit scans cheap
        for (std::size_t j = 0; j < d; ++j)
            p[m * d + j] += ah * (z[j] - p[m * d + j]);
    }
}

// Eq. 6 objective: sum over samples of the minimum cosine distance.
// The per-sample mean of this value is the reported quantization error.
inline double quantization_objective(const Tensor& z, const SomGrid& g) {
    if (z.dim(0) == 0) return 0.0;
    Tensor dist = pairwise_distance(z, g);
    const std::size_t B = dist.dim(0), M = dist.dim(1);
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double best = dist.data()[b * M];
        for (std::size_t m = 1; m < M; ++m) best = std::min(best, dist.data()[b * M + m]);
        total += best;
    }
    return total;
}

}  // namespace vitsom::som
