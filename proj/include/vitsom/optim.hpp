#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vitsom/tensor.hpp"

namespace vitsom::optim {

// lr_min + 0.5 (lr_init - lr_min) (1 + cos(pi k / K)).
inline double cosine_lr(std::size_t k, std::size_t total, double lr_init, double lr_min) {
    if (total == 0) return lr_min;
    if (k > total) k = total;
    const double c = std::cos(M_PI * static_cast<double>(k) / static_cast<double>(total));
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + c);
}

// AdamW with decoupled weight decay. The decay shrinks the parameter
// directly (p *= 1 - lr*wd) and is independent of the adaptive step.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void register_param(const std::string& name, Tensor param) {
        slots_.push_back(Slot{name, std::move(param),
                              std::vector<double>(0), std::vector<double>(0)});
        slots_.back().m.assign(slots_.back().param.numel(), 0.0);
        slots_.back().v.assign(slots_.back().param.numel(), 0.0);
    }

    std::size_t step_count() const { return t_; }

    void zero_grad() {
        for (Slot& s : slots_) s.param.zero_grad();
    }

    // One update over all registered parameters from their .grad() buffers.
    void step(double lr, double weight_decay) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (Slot& s : slots_) {
            auto& p = s.param.data();
            const auto& g = s.param.grad();
            for (std::size_t i = 0; i < p.size(); ++i) {
                if (!std::isfinite(g[i]))
                    throw NumericError("AdamW: non-finite gradient in parameter '" + s.name +
                                       "' at element " + std::to_string(i));
                if (weight_decay != 0.0) p[i] -= lr * weight_decay * p[i];
                s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
                s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = s.m[i] / bc1;
                const double vhat = s.v[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    struct Slot {
        std::string name;
        Tensor param;
        std::vector<double> m, v;
    };

    std::vector<Slot>& slots() { return slots_; }
    const std::vector<Slot>& slots() const { return slots_; }
    void set_step_count(std::size_t t) { t_ = t; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Slot> slots_;
};

}  // namespace vitsom::optim
