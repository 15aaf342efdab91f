#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vitsom/objective.hpp"
#include "vitsom/ops.hpp"
#include "vitsom/optim.hpp"
#include "vitsom/som.hpp"
#include "vitsom/tensor.hpp"

// Independent oracles and check suites. Everything here recomputes expected
// values by a route separate from the implementation it checks (exhaustive
// scans, central finite differences, double loops).
namespace vitsom::verify {

struct CheckResult {
    std::string suite;
    bool passed = true;
    std::string detail;  // first failing case, inputs included
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheck {
    double max_rel_err = 0.0;
    bool ok = true;
    std::string worst;
};

// Central differences at h on every element of every differentiable input.
// Relative error uses max(|analytic|, |numeric|) as scale; gradients that
// are both tiny in absolute terms count as matching.
inline GradCheck gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double h = 1e-5, double tol = 1e-4) {
    GradCheck r;
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = f(inputs);
        for (Tensor& t : inputs) t.zero_grad();
        tape.backward(loss);
    }
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor& t = inputs[ti];
        if (!t.requires_grad()) continue;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double orig = t.data()[i];
            t.data()[i] = orig + h;
            const double fp = f(inputs).item();
            t.data()[i] = orig - h;
            const double fm = f(inputs).item();
            t.data()[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = t.grad()[i];
            const double scale = std::max(std::abs(numeric), std::abs(analytic));
            if (scale < 1e-7) continue;
            const double rel = std::abs(numeric - analytic) / scale;
            if (rel > r.max_rel_err) {
                r.max_rel_err = rel;
                std::ostringstream os;
                os << "input " << ti << " elem " << i << ": analytic=" << analytic
                   << " numeric=" << numeric << " rel=" << rel;
                r.worst = os.str();
            }
        }
    }
    r.ok = r.max_rel_err < tol;
    return r;
}

// ---------------------------------------------------------------------------
// Suite: per-op gradient fidelity on random inputs in [-1, 1]
// ---------------------------------------------------------------------------

inline CheckResult check_op_gradients(std::size_t trials, std::uint64_t seed) {
    CheckResult res{"gradients", true, ""};
    std::mt19937_64 rng(seed);
    auto rand_t = [&](Shape s) { return Tensor::uniform(std::move(s), -1.0, 1.0, rng, true); };
    struct Case {
        std::string name;
        std::function<Tensor(const std::vector<Tensor>&)> f;
        std::function<std::vector<Tensor>()> make;
    };
    const std::vector<Case> cases = {
        {"matmul", [](const std::vector<Tensor>& in) { return ops::sum(ops::matmul(in[0], in[1])); },
         [&]() { return std::vector<Tensor>{rand_t({3, 4}), rand_t({4, 2})}; }},
        {"matmul_batched",
         [](const std::vector<Tensor>& in) { return ops::sum(ops::matmul(in[0], in[1])); },
         [&]() { return std::vector<Tensor>{rand_t({2, 3, 4}), rand_t({2, 4, 3})}; }},
        {"softmax",
         [](const std::vector<Tensor>& in) {
             // Weighted sum makes the softmax Jacobian observable.
             Tensor w = Tensor::from_data({2, 5}, {0.3, -0.7, 1.1, 0.2, -0.4,
                                                   0.9, 0.5, -1.2, 0.1, 0.6});
             return ops::sum(ops::mul(ops::softmax(in[0], 1), w));
         },
         [&]() { return std::vector<Tensor>{rand_t({2, 5})}; }},
        {"layer_norm",
         [](const std::vector<Tensor>& in) {
             Tensor w = Tensor::from_data({2, 4}, {1.0, -0.5, 0.25, 2.0, -1.0, 0.75, 0.5, -0.25});
             return ops::sum(ops::mul(ops::layer_norm(in[0], in[1], in[2], 1e-5), w));
         },
         [&]() { return std::vector<Tensor>{rand_t({2, 4}), rand_t({4}), rand_t({4})}; }},
        {"gelu", [](const std::vector<Tensor>& in) { return ops::sum(ops::gelu(in[0])); },
         [&]() { return std::vector<Tensor>{rand_t({6})}; }},
        {"mse", [](const std::vector<Tensor>& in) { return ops::mse(in[0], in[1]); },
         [&]() { return std::vector<Tensor>{rand_t({3, 3}), rand_t({3, 3})}; }},
        {"l2_normalize",
         [](const std::vector<Tensor>& in) {
             Tensor w = Tensor::from_data({2, 3}, {0.5, -1.0, 0.75, 1.25, -0.5, 0.3});
             return ops::sum(ops::mul(ops::l2_normalize_rows(in[0]), w));
         },
         [&]() { return std::vector<Tensor>{rand_t({2, 3})}; }},
        {"pairwise_sqeuclidean",
         [](const std::vector<Tensor>& in) {
             return ops::sum(ops::pairwise_sqeuclidean(in[0], in[1]));
         },
         [&]() { return std::vector<Tensor>{rand_t({3, 4}), rand_t({5, 4})}; }},
        {"cross_entropy",
         [](const std::vector<Tensor>& in) {
             return ops::cross_entropy(in[0], {0, 2, 1});
         },
         [&]() { return std::vector<Tensor>{rand_t({3, 4})}; }},
        {"transpose_slice_concat",
         [](const std::vector<Tensor>& in) {
             Tensor t = ops::transpose_last2(in[0]);  // [4, 3]
             Tensor a = ops::slice(t, 0, 0, 2), b = ops::slice(t, 0, 2, 2);
             return ops::sum(ops::mul(ops::concat({b, a}, 0), ops::transpose_last2(in[0])));
         },
         [&]() { return std::vector<Tensor>{rand_t({3, 4})}; }},
    };
    for (std::size_t k = 0; k < trials && res.passed; ++k) {
        for (const Case& c : cases) {
            auto inputs = c.make();
            GradCheck g = gradcheck(c.f, inputs);
            if (!g.ok) {
                res.passed = false;
                res.detail = "op " + c.name + " trial " + std::to_string(k) + ": " + g.worst;
                break;
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Suite: BMU against an exhaustive, independent scan
// ---------------------------------------------------------------------------

// Naive reference distance + argmin, written without the library's pairwise
// kernels.
inline std::vector<std::size_t> naive_bmu(const std::vector<double>& z, std::size_t B,
                                          const std::vector<double>& protos, std::size_t M,
                                          std::size_t dim, som::Metric metric) {
    std::vector<std::size_t> out(B);
    for (std::size_t b = 0; b < B; ++b) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0;
        for (std::size_t m = 0; m < M; ++m) {
            double d = 0.0;
            if (metric == som::Metric::kEuclidean) {
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = z[b * dim + j] - protos[m * dim + j];
                    d += diff * diff;
                }
            } else if (metric == som::Metric::kManhattan) {
                for (std::size_t j = 0; j < dim; ++j)
                    d += std::abs(z[b * dim + j] - protos[m * dim + j]);
            } else {
                double dot = 0.0, nz = 0.0, np = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    dot += z[b * dim + j] * protos[m * dim + j];
                    nz += z[b * dim + j] * z[b * dim + j];
                    np += protos[m * dim + j] * protos[m * dim + j];
                }
                d = (nz == 0.0 || np == 0.0) ? 1.0 : 1.0 - dot / (std::sqrt(nz) * std::sqrt(np));
            }
            if (d < best) {
                best = d;
                bi = m;
            }
        }
        out[b] = bi;
    }
    return out;
}

inline CheckResult check_bmu_oracle(std::size_t trials, std::uint64_t seed) {
    CheckResult res{"bmu_oracle", true, ""};
    std::mt19937_64 rng(seed);
    const som::Metric metrics[] = {som::Metric::kCosine, som::Metric::kEuclidean,
                                   som::Metric::kManhattan};
    for (std::size_t k = 0; k < trials; ++k) {
        const std::size_t H = 2 + rng() % 5, W = 2 + rng() % 5, dim = 1 + rng() % 8;
        const std::size_t B = 1 + rng() % 16;
        const som::Metric metric = metrics[k % 3];
        som::SomGrid g = som::SomGrid::init(H, W, dim, metric, rng, false);
        Tensor z = Tensor::uniform({B, dim}, -1.0, 1.0, rng);
        if (k % 7 == 0) {
            // Engineered tie: duplicate a prototype, put the sample on it.
            const std::size_t u = rng() % (H * W - 1);
            std::copy_n(g.prototypes.data().begin() + u * dim, dim,
                        g.prototypes.data().begin() + (u + 1) * dim);
            std::copy_n(g.prototypes.data().begin() + u * dim, dim, z.data().begin());
        }
        auto got = som::find_bmu(som::pairwise_distance(z, g));
        auto want = naive_bmu(z.data(), B, g.prototypes.data(), H * W, dim, metric);
        for (std::size_t b = 0; b < B; ++b) {
            // The tie rule (lowest index) must agree; so must plain argmins.
            // Cosine goes through two different float paths, so compare with
            // a tolerance on distances instead when indices differ.
            if (got[b] != want[b]) {
                Tensor d2 = som::pairwise_distance(z, g);
                const double dgot = d2.data()[b * H * W + got[b]];
                const double dwant = d2.data()[b * H * W + want[b]];
                if (std::abs(dgot - dwant) > 1e-12) {
                    res.passed = false;
                    std::ostringstream os;
                    os << "trial " << k << " sample " << b << " metric "
                       << som::metric_name(metric) << ": got unit " << got[b] << " want "
                       << want[b] << " (d_got=" << dgot << " d_want=" << dwant << ")";
                    res.detail = os.str();
                    return res;
                }
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Suite: batch/sequential SOM equivalence
// ---------------------------------------------------------------------------

// With the Euclidean (squared) metric, B=1 and step size eta, one plain SGD
// step on the batch loss equals the classic update with alpha = 2*eta.
inline CheckResult check_batch_sequential(std::size_t trials, std::uint64_t seed,
                                          double tol = 1e-10) {
    CheckResult res{"batch_sequential", true, ""};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> tdist(0.3, 4.0);
    std::uniform_real_distribution<double> edist(0.01, 0.2);
    for (std::size_t k = 0; k < trials; ++k) {
        const std::size_t H = 2 + rng() % 5, W = 2 + rng() % 5, dim = 1 + rng() % 6;
        som::SomGrid g = som::SomGrid::init(H, W, dim, som::Metric::kEuclidean, rng);
        const double t = tdist(rng), eta = edist(rng);
        Tensor z = Tensor::uniform({1, dim}, -1.0, 1.0, rng);

        som::SomGrid g_sgd = g;
        g_sgd.prototypes = g.prototypes.detached_copy();
        g_sgd.prototypes.set_requires_grad(true);
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor loss = som::som_loss(z, g_sgd, t);
            g_sgd.prototypes.zero_grad();
            tape.backward(loss);
        }
        for (std::size_t i = 0; i < g_sgd.prototypes.numel(); ++i)
            g_sgd.prototypes.data()[i] -= eta * g_sgd.prototypes.grad()[i];

        som::SomGrid g_classic = g;
        g_classic.prototypes = g.prototypes.detached_copy();
        som::classic_update(z.data(), g_classic, 2.0 * eta, t);

        for (std::size_t i = 0; i < g.prototypes.numel(); ++i) {
            const double diff =
                std::abs(g_sgd.prototypes.data()[i] - g_classic.prototypes.data()[i]);
            if (diff > tol) {
                res.passed = false;
                std::ostringstream os;
                os << "trial " << k << " elem " << i << ": sgd=" << g_sgd.prototypes.data()[i]
                   << " classic=" << g_classic.prototypes.data()[i] << " diff=" << diff
                   << " (T=" << t << ", eta=" << eta << ", map " << H << "x" << W << ")";
                res.detail = os.str();
                return res;
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Suite: schedule endpoints
// ---------------------------------------------------------------------------

inline CheckResult check_schedules() {
    CheckResult res{"schedules", true, ""};
    auto fail = [&](const std::string& what) {
        res.passed = false;
        if (res.detail.empty()) res.detail = what;
    };
    som::TemperatureSchedule ts(12.0, 0.001, 1000);
    if (som::temperature(0, ts) != 12.0) fail("temperature(0) != T_max");
    if (std::abs(som::temperature(1000, ts) - 0.001) > 1e-15) fail("temperature(K) != T_min");
    if (som::temperature(2000, ts) != 0.001) fail("temperature beyond K must clamp to T_min");
    for (std::size_t k = 1; k <= 1000; ++k)
        if (!(som::temperature(k, ts) < som::temperature(k - 1, ts))) {
            fail("temperature not strictly decreasing at k=" + std::to_string(k));
            break;
        }
    const double lr0 = optim::cosine_lr(0, 100, 0.01, 1e-6);
    const double lrK = optim::cosine_lr(100, 100, 0.01, 1e-6);
    const double lrH = optim::cosine_lr(50, 100, 0.01, 1e-6);
    if (std::abs(lr0 - 0.01) > 1e-12) fail("cosine_lr(0) != lr_init");
    if (std::abs(lrK - 1e-6) > 1e-12) fail("cosine_lr(K) != lr_min");
    if (std::abs(lrH - (0.01 + 1e-6) / 2.0) > 1e-12) fail("cosine_lr(K/2) != midpoint");
    objective::GammaSchedule gs(0.005, 200);
    if (gs.at(0) != 0.0) fail("gamma(0) != 0");
    if (gs.at(200) != 0.005) fail("gamma(warmup) != gamma_final");
    if (std::abs(gs.at(100) - 0.0025) > 1e-15) fail("gamma(warmup/2) != gamma_final/2");
    return res;
}

inline std::vector<CheckResult> run_all(std::size_t trials, std::uint64_t seed) {
    return {check_op_gradients(trials, seed), check_bmu_oracle(std::max<std::size_t>(trials * 10, 50), seed + 1),
            check_batch_sequential(std::max<std::size_t>(trials * 10, 50), seed + 2), check_schedules()};
}

}  // namespace vitsom::verify
