#pragma once

#include <functional>
#include <memory>

#include "mafea/common.hpp"

namespace mafea {

class Tensor;

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // sized lazily; always data.size() once touched
    std::shared_ptr<Node> producer;  // null for leaves
    bool backward_done = false;      // set on a root once its tape has run

    Index numel() const { return static_cast<Index>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void accumulate(const double* g, Index n);
};

// One executed operation: the inputs it consumed and a closure that folds the
// output adjoint into the input adjoints.
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::weak_ptr<TensorImpl> output;
    std::function<void(const TensorImpl& out)> backward;
};

}  // namespace detail

/// Thread-local switch: while disabled, ops run forward-only and record no
/// graph. Used by evaluation and finite-difference probes.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Dense row-major tensor of 64-bit reals, optionally participating in the
/// reverse-mode tape. Cheap to copy: copies share storage and grad.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    Index rank() const { return static_cast<Index>(impl_->shape.size()); }
    Index dim(Index i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    Index numel() const { return impl_->numel(); }

    std::vector<double>& values() { return impl_->data; }
    const std::vector<double>& values() const { return impl_->data; }
    double* ptr() { return impl_->data.data(); }
    const double* ptr() const { return impl_->data.data(); }

    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg);
    /// Gradient buffer; zeros if no backward has touched this tensor yet.
    const std::vector<double>& grad() const;
    void zero_grad();

    Tensor detach() const;
    Tensor clone() const;  // deep copy, leaf

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl);

  private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of the operations reachable from one output, replayed in
/// strict reverse topological order by run(). A root may run one backward;
/// re-running without rebuilding the forward pass is an error.
class Tape {
  public:
    static Tape trace(const Tensor& root);
    void run();
    std::size_t size() const { return order_.size(); }

  private:
    std::shared_ptr<detail::TensorImpl> root_;
    std::vector<detail::Node*> order_;  // topological, leaves-first
};

/// Backward pass for a scalar loss: seeds the adjoint with 1 and populates
/// grad on every requires_grad leaf.
void backward(const Tensor& loss);

/// Max over coordinates of the relative error between the backward gradient
/// of f at x and central finite differences with step eps.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps);

namespace detail {
/// Forward-op constructor used by every primitive: validates finiteness,
/// wires the graph node when gradients are live.
Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(const TensorImpl& out)> backward_fn);
bool any_requires_grad(const std::vector<Tensor>& ts);
}  // namespace detail

}  // namespace mafea
