#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vitsom/errors.hpp"

namespace vitsom {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;
};

}  // namespace detail

// Dense row-major 64-bit float tensor. Copying a Tensor copies the handle,
// not the storage; ops that record onto the active Tape keep their operands
// alive through the recorded closures.
class Tensor {
public:
    Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.impl_->shape = std::move(shape);
        t.impl_->data.assign(shape_numel(t.impl_->shape), 0.0);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor full(Shape shape, double value) {
        Tensor t = zeros(std::move(shape));
        for (double& v : t.data()) v = value;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<double> data,
                            bool requires_grad = false) {
        if (shape_numel(shape) != data.size())
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        Tensor t;
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(data);
        t.impl_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v) { return from_data({1}, {v}); }

    // Uniform init in [lo, hi), seeded by the caller's engine.
    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937_64& rng,
                          bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::uniform_real_distribution<double> dist(lo, hi);
        for (double& v : t.data()) v = dist(rng);
        return t;
    }

    static Tensor normal(Shape shape, double mean, double stddev, std::mt19937_64& rng,
                         bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::normal_distribution<double> dist(mean, stddev);
        for (double& v : t.data()) v = dist(rng);
        return t;
    }

    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t numel() const { return impl_->data.size(); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<double>& grad() {
        ensure_grad();
        return impl_->grad;
    }
    const std::vector<double>& grad() const {
        const_cast<Tensor*>(this)->ensure_grad();
        return impl_->grad;
    }
    void ensure_grad() {
        if (impl_->grad.size() != impl_->data.size())
            impl_->grad.assign(impl_->data.size(), 0.0);
    }
    void zero_grad() {
        if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
    }

    double item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return impl_->data[0];
    }

    // Handle identity (same storage), used by the tape and optimizers.
    const void* id() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

    Tensor detached_copy() const {
        return from_data(shape(), data(), false);
    }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Dynamic tape, rebuilt every forward pass. Nodes are closures that pull the
// output gradient and accumulate into input gradients; backward runs them in
// exact reverse recording order.
class Tape {
public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    void backward(Tensor loss) {
        if (loss.numel() != 1)
            throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw ContractError("backward on a tensor that is not on the tape");
        loss.grad()[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    static Tape*& active() {
        thread_local Tape* current = nullptr;
        return current;
    }

private:
    std::vector<std::function<void()>> nodes_;
};

// RAII scope that makes a tape the recording target.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : prev_(Tape::active()) { Tape::active() = &tape; }
    ~TapeScope() { Tape::active() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {

inline bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

}  // namespace detail

}  // namespace vitsom
