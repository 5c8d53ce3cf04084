#include "mafea/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mafea {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << ']';
    return out.str();
}

namespace detail {

void TensorImpl::accumulate(const double* g, Index n) {
    ensure_grad();
    for (Index i = 0; i < n; ++i) grad[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
}

}  // namespace detail

namespace {
thread_local int no_grad_depth = 0;
}

bool grad_enabled() { return no_grad_depth == 0; }
NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    Index n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<std::size_t>(n), value);
    impl->requires_grad = requires_grad && grad_enabled();
    return wrap(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    Index n = shape_numel(shape);
    if (n != static_cast<Index>(values.size()))
        throw ConfigError("tensor data size " + std::to_string(values.size()) +
                          " does not match shape " + shape_to_string(shape));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad && grad_enabled();
    return wrap(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    Index n = shape_numel(shape);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = rng.normal() * stddev;
    return from_data(std::move(shape), std::move(values), requires_grad);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ConfigError("item() on tensor of shape " + shape_to_string(shape()));
    return impl_->data[0];
}

void Tensor::set_requires_grad(bool rg) {
    if (rg && impl_->producer)
        throw ConfigError("requires_grad can only be enabled on leaf tensors");
    impl_->requires_grad = rg;
}

const std::vector<double>& Tensor::grad() const {
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0);
    impl_->backward_done = false;
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;  // value copy; graph and grad dropped
    impl->requires_grad = false;
    return wrap(std::move(impl));
}

Tensor Tensor::clone() const {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = impl_->requires_grad;
    return wrap(std::move(impl));
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

Tape Tape::trace(const Tensor& root) {
    Tape tape;
    tape.root_ = root.impl();
    // Iterative depth-first post-order over producer nodes; the resulting
    // order lists each node after everything it feeds into was listed, so
    // reversing it gives the adjoint replay order.
    std::unordered_set<const detail::Node*> visited;
    struct Frame {
        detail::Node* node;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    std::vector<detail::Node*> post;
    if (root.impl()->producer) {
        stack.push_back({root.impl()->producer.get(), 0});
        visited.insert(root.impl()->producer.get());
    }
    while (!stack.empty()) {
        Frame& top = stack.back();
        if (top.next_input < top.node->inputs.size()) {
            detail::Node* child = top.node->inputs[top.next_input++]->producer.get();
            if (child && !visited.count(child)) {
                visited.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            post.push_back(top.node);
            stack.pop_back();
        }
    }
    tape.order_ = std::move(post);
    return tape;
}

void Tape::run() {
    if (root_->backward_done)
        throw ConfigError("backward already ran for this output; rebuild the forward pass first");
    root_->backward_done = true;
    root_->ensure_grad();
    std::fill(root_->grad.begin(), root_->grad.end(), 1.0);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node* node = *it;
        auto out = node->output.lock();
        if (!out)
            throw ConfigError("graph output expired before backward; keep intermediate tensors alive via the loss");
        out->ensure_grad();
        node->backward(*out);
    }
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ConfigError("backward expects a scalar loss, got shape " + shape_to_string(loss.shape()));
    Tape::trace(loss).run();
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    Tensor y = f(probe);
    backward(y);
    std::vector<double> analytic = probe.grad();

    Tensor work = x.clone();
    std::vector<double>& v = work.values();
    double worst = 0.0;
    NoGradGuard ng;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double saved = v[i];
        double step = eps * std::max(1.0, std::fabs(saved));
        v[i] = saved + step;
        double hi = f(work).item();
        v[i] = saved - step;
        double lo = f(work).item();
        v[i] = saved;
        double numeric = (hi - lo) / (2.0 * step);
        double err = std::fabs(analytic[i] - numeric) /
                     std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
        worst = std::max(worst, err);
    }
    return worst;
}

namespace detail {

bool any_requires_grad(const std::vector<Tensor>& ts) {
    for (const auto& t : ts)
        if (t.requires_grad() || t.impl()->producer) return true;
    return false;
}

Tensor make_op(const char* name, Shape shape, std::vector<double> data,
               std::vector<Tensor> inputs,
               std::function<void(const TensorImpl& out)> backward_fn) {
    for (double v : data)
        if (!std::isfinite(v))
            throw NumericError(std::string(name) + " produced a non-finite value");
    Index n = shape_numel(shape);
    if (n != static_cast<Index>(data.size()))
        throw ConfigError(std::string(name) + ": output size mismatch for shape " + shape_to_string(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (grad_enabled() && any_requires_grad(inputs)) {
        auto node = std::make_shared<Node>();
        node->inputs.reserve(inputs.size());
        for (auto& t : inputs) node->inputs.push_back(t.impl());
        node->output = impl;
        node->backward = std::move(backward_fn);
        impl->producer = std::move(node);
        impl->requires_grad = true;
    }
    return Tensor::wrap(std::move(impl));
}

}  // namespace detail

}  // namespace mafea
