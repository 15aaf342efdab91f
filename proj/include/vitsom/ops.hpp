#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include <Eigen/Core>

#include "vitsom/tensor.hpp"

// Differentiable ops over rank <= 3 row-major tensors. Each op computes the
// forward value eagerly and, when a tape is active and an input requires
// grad, records a closure that accumulates input gradients from the output
// gradient. Gradients accumulate additively across uses.
namespace vitsom::ops {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace detail2 {

inline void accumulate(Tensor& t, const std::vector<double>& delta) {
    auto& g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// Splits a shape into (lines, line_length) along the given axis together with
// strides, so axis-wise ops can walk arbitrary-rank tensors.
struct AxisWalk {
    std::size_t outer, axis_len, inner;
};

inline AxisWalk axis_walk(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) +
                                               " out of range for " + shape_str(s));
    AxisWalk w{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) w.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) w.inner *= s[i];
    return w;
}

}  // namespace detail2

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (vitsom::detail::tracking({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ac = a, bc = b, oc = out;
        Tape::active()->record([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            if (ac.requires_grad()) detail2::accumulate(ac, oc.grad());
            if (bc.requires_grad()) detail2::accumulate(bc, oc.grad());
        });
    }
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    if (vitsom::detail::tracking({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ac = a, bc = b, oc = out;
        Tape::active()->record([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) detail2::accumulate(ac, g);
            if (bc.requires_grad()) {
                auto& bg = bc.grad();
                for (std::size_t i = 0; i < bg.size(); ++i) bg[i] -= g[i];
            }
        });
    }
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (vitsom::detail::tracking({&a, &b})) {
        out.set_requires_grad(true);
        Tensor ac = a, bc = b, oc = out;
        Tape::active()->record([ac, bc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (ac.requires_grad()) {
                auto& ag = ac.grad();
                for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * bc.data()[i];
            }
            if (bc.requires_grad()) {
                auto& bg = bc.grad();
                for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += g[i] * ac.data()[i];
            }
        });
    }
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] * c;
    if (vitsom::detail::tracking({&a})) {
        out.set_requires_grad(true);
        Tensor ac = a, oc = out;
        Tape::active()->record([ac, oc, c]() mutable {
            if (!oc.has_grad()) return;
            auto& ag = ac.grad();
            const auto& g = oc.grad();
            for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += g[i] * c;
        });
    }
    return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = a.data()[i] + c;
    if (vitsom::detail::tracking({&a})) {
        out.set_requires_grad(true);
        Tensor ac = a, oc = out;
        Tape::active()->record([ac, oc]() mutable {
            if (!oc.has_grad()) return;
            detail2::accumulate(ac, oc.grad());
        });
    }
    return out;
}

// x: [..., d], bias: [d]; broadcast add over all leading dims.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rank() != 1 || x.rank() < 1 || x.shape().back() != bias.dim(0))
        throw DimensionError("add_bias: " + shape_str(x.shape()) + " vs " +
                             shape_str(bias.shape()));
    const std::size_t d = bias.dim(0);
    const std::size_t rows = x.numel() / d;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j)
            out.data()[r * d + j] = x.data()[r * d + j] + bias.data()[j];
    if (vitsom::detail::tracking({&x, &bias})) {
        out.set_requires_grad(true);
        Tensor xc = x, bc = bias, oc = out;
        Tape::active()->record([xc, bc, oc, rows, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (xc.requires_grad()) detail2::accumulate(xc, g);
            if (bc.requires_grad()) {
                auto& bg = bc.grad();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < d; ++j) bg[j] += g[r * d + j];
            }
        });
    }
    return out;
}

// x: [B, n, d], rows: [n, d]; adds `rows` to every batch element
// (positional embeddings). Gradient of `rows` sums over the batch.
inline Tensor add_rows(const Tensor& x, const Tensor& rows) {
    if (x.rank() != 3 || rows.rank() != 2 || x.dim(1) != rows.dim(0) || x.dim(2) != rows.dim(1))
        throw DimensionError("add_rows: " + shape_str(x.shape()) + " vs " +
                             shape_str(rows.shape()));
    const std::size_t B = x.dim(0), nd = rows.numel();
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < nd; ++i)
            out.data()[b * nd + i] = x.data()[b * nd + i] + rows.data()[i];
    if (vitsom::detail::tracking({&x, &rows})) {
        out.set_requires_grad(true);
        Tensor xc = x, rc = rows, oc = out;
        Tape::active()->record([xc, rc, oc, B, nd]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            if (xc.requires_grad()) detail2::accumulate(xc, g);
            if (rc.requires_grad()) {
                auto& rg = rc.grad();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t i = 0; i < nd; ++i) rg[i] += g[b * nd + i];
            }
        });
    }
    return out;
}

// row: [1, d] or [d] tiled to [B, 1, d] (CLS token broadcast).
inline Tensor tile_token(const Tensor& row, std::size_t B) {
    const std::size_t d = row.numel();
    Tensor out = Tensor::zeros({B, 1, d});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < d; ++j) out.data()[b * d + j] = row.data()[j];
    if (vitsom::detail::tracking({&row})) {
        out.set_requires_grad(true);
        Tensor rc = row, oc = out;
        Tape::active()->record([rc, oc, B, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& rg = rc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t j = 0; j < d; ++j) rg[j] += g[b * d + j];
        });
    }
    return out;
}

// matmul supports [m,k]x[k,n], [B,m,k]x[k,n] (rhs broadcast) and
// [B,m,k]x[B,k,n]. Inner products run through Eigen.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto bad = [&]() {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    };
    if (a.rank() == 2 && b.rank() == 2) {
        const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
        if (b.dim(0) != k) bad();
        Tensor out = Tensor::zeros({m, n});
        ECMap A(a.data().data(), m, k), B(b.data().data(), k, n);
        EMap(out.data().data(), m, n).noalias() = A * B;
        if (vitsom::detail::tracking({&a, &b})) {
            out.set_requires_grad(true);
            Tensor ac = a, bc = b, oc = out;
            Tape::active()->record([ac, bc, oc, m, k, n]() mutable {
                if (!oc.has_grad()) return;
                ECMap G(oc.grad().data(), m, n);
                if (ac.requires_grad()) {
                    ECMap B2(bc.data().data(), k, n);
                    EMap(ac.grad().data(), m, k).noalias() += G * B2.transpose();
                }
                if (bc.requires_grad()) {
                    ECMap A2(ac.data().data(), m, k);
                    EMap(bc.grad().data(), k, n).noalias() += A2.transpose() * G;
                }
            });
        }
        return out;
    }
    if (a.rank() == 3 && b.rank() == 2) {
        const std::size_t Bn = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
        if (b.dim(0) != k) bad();
        // Collapse the batch: [B*m, k] x [k, n].
        Tensor out = Tensor::zeros({Bn, m, n});
        ECMap A(a.data().data(), Bn * m, k), B(b.data().data(), k, n);
        EMap(out.data().data(), Bn * m, n).noalias() = A * B;
        if (vitsom::detail::tracking({&a, &b})) {
            out.set_requires_grad(true);
            Tensor ac = a, bc = b, oc = out;
            Tape::active()->record([ac, bc, oc, Bn, m, k, n]() mutable {
                if (!oc.has_grad()) return;
                ECMap G(oc.grad().data(), Bn * m, n);
                if (ac.requires_grad()) {
                    ECMap B2(bc.data().data(), k, n);
                    EMap(ac.grad().data(), Bn * m, k).noalias() += G * B2.transpose();
                }
                if (bc.requires_grad()) {
                    ECMap A2(ac.data().data(), Bn * m, k);
                    EMap(bc.grad().data(), k, n).noalias() += A2.transpose() * G;
                }
            });
        }
        return out;
    }
    if (a.rank() == 3 && b.rank() == 3) {
        const std::size_t Bn = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
        if (b.dim(0) != Bn || b.dim(1) != k) bad();
        Tensor out = Tensor::zeros({Bn, m, n});
        for (std::size_t i = 0; i < Bn; ++i) {
            ECMap A(a.data().data() + i * m * k, m, k);
            ECMap B(b.data().data() + i * k * n, k, n);
            EMap(out.data().data() + i * m * n, m, n).noalias() = A * B;
        }
        if (vitsom::detail::tracking({&a, &b})) {
            out.set_requires_grad(true);
            Tensor ac = a, bc = b, oc = out;
            Tape::active()->record([ac, bc, oc, Bn, m, k, n]() mutable {
                if (!oc.has_grad()) return;
                for (std::size_t i = 0; i < Bn; ++i) {
                    ECMap G(oc.grad().data() + i * m * n, m, n);
                    if (ac.requires_grad()) {
                        ECMap B2(bc.data().data() + i * k * n, k, n);
                        EMap(ac.grad().data() + i * m * k, m, k).noalias() += G * B2.transpose();
                    }
                    if (bc.requires_grad()) {
                        ECMap A2(ac.data().data() + i * m * k, m, k);
                        EMap(bc.grad().data() + i * k * n, k, n).noalias() += A2.transpose() * G;
                    }
                }
            });
        }
        return out;
    }
    bad();
    return {};
}

// Transpose of the last two axes (rank 2 or 3).
inline Tensor transpose_last2(const Tensor& x) {
    if (x.rank() != 2 && x.rank() != 3)
        throw DimensionError("transpose_last2: rank must be 2 or 3, got " + shape_str(x.shape()));
    const std::size_t Bn = x.rank() == 3 ? x.dim(0) : 1;
    const std::size_t m = x.dim(x.rank() - 2), n = x.dim(x.rank() - 1);
    Shape os = x.shape();
    std::swap(os[os.size() - 2], os[os.size() - 1]);
    Tensor out = Tensor::zeros(os);
    for (std::size_t b = 0; b < Bn; ++b)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out.data()[b * m * n + j * m + i] = x.data()[b * m * n + i * n + j];
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc, Bn, m, n]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& xg = xc.grad();
            for (std::size_t b = 0; b < Bn; ++b)
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        xg[b * m * n + i * n + j] += g[b * m * n + j * m + i];
        });
    }
    return out;
}

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(shape));
    Tensor out = Tensor::from_data(std::move(shape), x.data());
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            detail2::accumulate(xc, oc.grad());
        });
    }
    return out;
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.rank() || start + len > x.dim(axis))
        throw DimensionError("slice: axis " + std::to_string(axis) + " [" +
                             std::to_string(start) + "," + std::to_string(start + len) +
                             ") out of range for " + shape_str(x.shape()));
    auto w = detail2::axis_walk(x.shape(), axis);
    Shape os = x.shape();
    os[axis] = len;
    Tensor out = Tensor::zeros(os);
    for (std::size_t o = 0; o < w.outer; ++o)
        for (std::size_t a = 0; a < len; ++a)
            std::copy_n(x.data().data() + (o * w.axis_len + start + a) * w.inner, w.inner,
                        out.data().data() + (o * len + a) * w.inner);
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc, w, start, len]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& xg = xc.grad();
            for (std::size_t o = 0; o < w.outer; ++o)
                for (std::size_t a = 0; a < len; ++a)
                    for (std::size_t i = 0; i < w.inner; ++i)
                        xg[(o * w.axis_len + start + a) * w.inner + i] +=
                            g[(o * len + a) * w.inner + i];
        });
    }
    return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: empty input list");
    Shape os = parts[0].shape();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != os.size() || axis >= p.rank())
            throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < os.size(); ++i)
            if (i != axis && p.dim(i) != os[i])
                throw DimensionError("concat: shape mismatch " + shape_str(p.shape()));
        total += p.dim(axis);
    }
    os[axis] = total;
    Tensor out = Tensor::zeros(os);
    auto w = detail2::axis_walk(os, axis);
    std::size_t offset = 0;
    bool track = false;
    for (const Tensor& p : parts) track = track || vitsom::detail::tracking({&p});
    for (const Tensor& p : parts) {
        const std::size_t alen = p.dim(axis);
        for (std::size_t o = 0; o < w.outer; ++o)
            std::copy_n(p.data().data() + o * alen * w.inner, alen * w.inner,
                        out.data().data() + (o * total + offset) * w.inner);
        if (track && Tape::active()) {
            Tensor pc = p, oc = out;
            Tape::active()->record([pc, oc, w, offset, alen, total]() mutable {
                if (!oc.has_grad() || !pc.requires_grad()) return;
                const auto& g = oc.grad();
                auto& pg = pc.grad();
                for (std::size_t o = 0; o < w.outer; ++o)
                    for (std::size_t i = 0; i < alen * w.inner; ++i)
                        pg[o * alen * w.inner + i] += g[(o * total + offset) * w.inner + i];
            });
        }
        offset += alen;
    }
    if (track) out.set_requires_grad(true);
    return out;
}

// Numerically stable softmax along `axis` (max subtraction).
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    auto w = detail2::axis_walk(x.shape(), axis);
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t o = 0; o < w.outer; ++o)
        for (std::size_t i = 0; i < w.inner; ++i) {
            const auto idx = [&](std::size_t a) { return (o * w.axis_len + a) * w.inner + i; };
            double mx = x.data()[idx(0)];
            for (std::size_t a = 1; a < w.axis_len; ++a) mx = std::max(mx, x.data()[idx(a)]);
            double sum = 0.0;
            for (std::size_t a = 0; a < w.axis_len; ++a) {
                const double e = std::exp(x.data()[idx(a)] - mx);
                out.data()[idx(a)] = e;
                sum += e;
            }
            for (std::size_t a = 0; a < w.axis_len; ++a) out.data()[idx(a)] /= sum;
        }
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc, w]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            const auto& y = oc.data();
            auto& xg = xc.grad();
            for (std::size_t o = 0; o < w.outer; ++o)
                for (std::size_t i = 0; i < w.inner; ++i) {
                    const auto idx = [&](std::size_t a) {
                        return (o * w.axis_len + a) * w.inner + i;
                    };
                    double dot = 0.0;
                    for (std::size_t a = 0; a < w.axis_len; ++a) dot += g[idx(a)] * y[idx(a)];
                    for (std::size_t a = 0; a < w.axis_len; ++a)
                        xg[idx(a)] += y[idx(a)] * (g[idx(a)] - dot);
                }
        });
    }
    return out;
}

// Layer norm over the last axis with learnable gain/bias. Variance uses 1/n.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d)
        throw DimensionError("layer_norm: gain/bias must match last axis " + std::to_string(d));
    const std::size_t rows = x.numel() / d;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(x.numel()), inv_sigma(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += xr[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = is;
        for (std::size_t j = 0; j < d; ++j) {
            xhat[r * d + j] = (xr[j] - mean) * is;
            out.data()[r * d + j] = xhat[r * d + j] * gain.data()[j] + bias.data()[j];
        }
    }
    if (vitsom::detail::tracking({&x, &gain, &bias})) {
        out.set_requires_grad(true);
        Tensor xc = x, gc = gain, bc = bias, oc = out;
        Tape::active()->record([xc, gc, bc, oc, rows, d, xhat, inv_sigma]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* gr = g.data() + r * d;
                const double* xh = xhat.data() + r * d;
                if (gc.requires_grad()) {
                    auto& gg = gc.grad();
                    for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xh[j];
                }
                if (bc.requires_grad()) {
                    auto& bg = bc.grad();
                    for (std::size_t j = 0; j < d; ++j) bg[j] += gr[j];
                }
                if (xc.requires_grad()) {
                    auto& xg = xc.grad();
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gy = gr[j] * gc.data()[j];
                        m1 += gy;
                        m2 += gy * xh[j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double gy = gr[j] * gc.data()[j];
                        xg[r * d + j] += (gy - m1 - xh[j] * m2) * inv_sigma[r];
                    }
                }
            }
        });
    }
    return out;
}

// Exact Gaussian-CDF GELU: x * Phi(x).
inline Tensor gelu(const Tensor& x) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = x.data()[i];
        out.data()[i] = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    }
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            auto& xg = xc.grad();
            for (std::size_t i = 0; i < xg.size(); ++i) {
                const double v = xc.data()[i];
                const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                xg[i] += g[i] * (phi + v * pdf);
            }
        });
    }
    return out;
}

inline Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc]() mutable {
            if (!oc.has_grad()) return;
            const double g = oc.grad()[0];
            auto& xg = xc.grad();
            for (double& v : xg) v += g;
        });
    }
    return out;
}

inline Tensor mean(const Tensor& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// Mean squared error over all elements.
inline Tensor mse(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("mse: shape mismatch " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    const double n = static_cast<double>(pred.numel());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    Tensor out = Tensor::scalar(s / n);
    if (vitsom::detail::tracking({&pred, &target})) {
        out.set_requires_grad(true);
        Tensor pc = pred, tc = target, oc = out;
        Tape::active()->record([pc, tc, oc, n]() mutable {
            if (!oc.has_grad()) return;
            const double g = oc.grad()[0];
            for (std::size_t i = 0; i < pc.numel(); ++i) {
                const double d = 2.0 * (pc.data()[i] - tc.data()[i]) / n * g;
                if (pc.requires_grad()) pc.grad()[i] += d;
                if (tc.requires_grad()) tc.grad()[i] -= d;
            }
        });
    }
    return out;
}

// Mean cross-entropy from raw logits [B, C] against integer labels.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || logits.dim(0) != labels.size())
        throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                             std::to_string(labels.size()) + " labels");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    std::vector<double> probs(B * C);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const int y = labels[b];
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw DataError("cross_entropy: label " + std::to_string(y) + " out of range [0," +
                            std::to_string(C) + ") at sample " + std::to_string(b));
        const double* lr = logits.data().data() + b * C;
        double mx = lr[0];
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, lr[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(lr[c] - mx);
        const double logz = mx + std::log(sum);
        for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = std::exp(lr[c] - logz);
        loss -= lr[y] - logz;
    }
    Tensor out = Tensor::scalar(loss / static_cast<double>(B));
    if (vitsom::detail::tracking({&logits})) {
        out.set_requires_grad(true);
        Tensor lc = logits, oc = out;
        Tape::active()->record([lc, oc, probs, labels, B, C]() mutable {
            if (!oc.has_grad()) return;
            const double g = oc.grad()[0] / static_cast<double>(B);
            auto& lg = lc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const double onehot = (static_cast<std::size_t>(labels[b]) == c) ? 1.0 : 0.0;
                    lg[b * C + c] += g * (probs[b * C + c] - onehot);
                }
        });
    }
    return out;
}

// Row-wise L2 normalization of a [B, d] tensor. Zero-norm rows map to zero
// (callers under the cosine metric treat that as distance 1) with zero grad.
inline Tensor l2_normalize_rows(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("l2_normalize_rows: expected rank 2, got " +
                                            shape_str(x.shape()));
    const std::size_t B = x.dim(0), d = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> norms(B);
    for (std::size_t b = 0; b < B; ++b) {
        const double* xr = x.data().data() + b * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += xr[j] * xr[j];
        const double nrm = std::sqrt(s);
        norms[b] = nrm;
        if (nrm > 0.0)
            for (std::size_t j = 0; j < d; ++j) out.data()[b * d + j] = xr[j] / nrm;
    }
    if (vitsom::detail::tracking({&x})) {
        out.set_requires_grad(true);
        Tensor xc = x, oc = out;
        Tape::active()->record([xc, oc, norms, B, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            const auto& y = oc.data();
            auto& xg = xc.grad();
            for (std::size_t b = 0; b < B; ++b) {
                if (norms[b] == 0.0) continue;
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += g[b * d + j] * y[b * d + j];
                for (std::size_t j = 0; j < d; ++j)
                    xg[b * d + j] += (g[b * d + j] - y[b * d + j] * dot) / norms[b];
            }
        });
    }
    return out;
}

// Pairwise squared-Euclidean distances: z [B, d] vs p [M, d] -> [B, M].
inline Tensor pairwise_sqeuclidean(const Tensor& z, const Tensor& p) {
    if (z.rank() != 2 || p.rank() != 2 || z.dim(1) != p.dim(1))
        throw DimensionError("pairwise_sqeuclidean: " + shape_str(z.shape()) + " vs " +
                             shape_str(p.shape()));
    const std::size_t B = z.dim(0), M = p.dim(0), d = z.dim(1);
    Tensor out = Tensor::zeros({B, M});
    {
        // |z - p|^2 = |z|^2 + |p|^2 - 2 z.p, with the cross term as a GEMM.
        ECMap Z(z.data().data(), B, d), P(p.data().data(), M, d);
        EMap O(out.data().data(), B, M);
        O.noalias() = -2.0 * (Z * P.transpose());
        const Eigen::VectorXd zn = Z.rowwise().squaredNorm();
        const Eigen::VectorXd pn = P.rowwise().squaredNorm();
        O.colwise() += zn;
        O.rowwise() += pn.transpose();
        O = O.cwiseMax(0.0);  // cancellation can leave tiny negatives
    }
    if (vitsom::detail::tracking({&z, &p})) {
        out.set_requires_grad(true);
        Tensor zc = z, pc = p, oc = out;
        Tape::active()->record([zc, pc, oc, B, M, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t m = 0; m < M; ++m) {
                    const double gv = g[b * M + m];
                    if (gv == 0.0) continue;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double diff = zc.data()[b * d + j] - pc.data()[m * d + j];
                        if (zc.requires_grad()) zc.grad()[b * d + j] += 2.0 * diff * gv;
                        if (pc.requires_grad()) pc.grad()[m * d + j] -= 2.0 * diff * gv;
                    }
                }
        });
    }
    return out;
}

// Pairwise Manhattan distances: z [B, d] vs p [M, d] -> [B, M].
inline Tensor pairwise_manhattan(const Tensor& z, const Tensor& p) {
    if (z.rank() != 2 || p.rank() != 2 || z.dim(1) != p.dim(1))
        throw DimensionError("pairwise_manhattan: " + shape_str(z.shape()) + " vs " +
                             shape_str(p.shape()));
    const std::size_t B = z.dim(0), M = p.dim(0), d = z.dim(1);
    Tensor out = Tensor::zeros({B, M});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t m = 0; m < M; ++m) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                s += std::abs(z.data()[b * d + j] - p.data()[m * d + j]);
            out.data()[b * M + m] = s;
        }
    if (vitsom::detail::tracking({&z, &p})) {
        out.set_requires_grad(true);
        Tensor zc = z, pc = p, oc = out;
        Tape::active()->record([zc, pc, oc, B, M, d]() mutable {
            if (!oc.has_grad()) return;
            const auto& g = oc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t m = 0; m < M; ++m) {
                    const double gv = g[b * M + m];
                    if (gv == 0.0) continue;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double diff = zc.data()[b * d + j] - pc.data()[m * d + j];
                        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                        if (zc.requires_grad()) zc.grad()[b * d + j] += s * gv;
                        if (pc.requires_grad()) pc.grad()[m * d + j] -= s * gv;
                    }
                }
        });
    }
    return out;
}

}  // namespace vitsom::ops
