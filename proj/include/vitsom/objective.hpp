#pragma once

#include <cmath>
#include <cstddef>

#include "vitsom/ops.hpp"
#include "vitsom/tensor.hpp"
#include "vitsom/vit.hpp"

namespace vitsom::objective {

// Linear warmup of the SOM-loss weight: 0 -> gamma_final over warmup_steps,
// constant afterwards.
struct GammaSchedule {
    double gamma_final = 0.0;
    std::size_t warmup_steps = 0;

    GammaSchedule() = default;
    GammaSchedule(double gf, std::size_t warmup) : gamma_final(gf), warmup_steps(warmup) {
        if (gf < 0.0) throw ConfigError("gamma_final must be >= 0");
    }

    double at(std::size_t step) const {
        if (warmup_steps == 0 || step >= warmup_steps) return gamma_final;
        return gamma_final * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
};

inline double gamma(std::size_t step, const GammaSchedule& s) { return s.at(step); }

// L_total = L_nn + gamma * L_som (both terms stay separately readable).
inline Tensor total_loss(const Tensor& l_nn, const Tensor& l_som, double gamma_value) {
    if (!std::isfinite(l_nn.item()))
        throw NumericError("total_loss: non-finite task loss L_nn");
    if (!std::isfinite(l_som.item()))
        throw NumericError("total_loss: non-finite SOM loss L_som");
    return ops::add(l_nn, ops::scale(l_som, gamma_value));
}

// Clustering: per-pixel MSE reconstruction. Classification: mean
// cross-entropy from logits.
inline Tensor task_loss(const Tensor& outputs, const Tensor& target_images,
                        const std::vector<int>& labels, vit::Task task) {
    if (task == vit::Task::kClustering) return ops::mse(outputs, target_images);
    return ops::cross_entropy(outputs, labels);
}

}  // namespace vitsom::objective
