#include "somnus/tensor.hpp"

#include <unordered_set>

namespace somnus {

namespace detail {

void accumulate_grad(const std::shared_ptr<TensorImpl>& impl, const double* g,
                     std::size_t n) {
    if (!impl->requires_grad) return;
    if (impl->grad.empty()) impl->grad.assign(impl->values.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) impl->grad[i] += g[i];
}

}  // namespace detail

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (::somnus::numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " implies " +
                         std::to_string(::somnus::numel(shape)) + " elements, got " +
                         std::to_string(values.size()));
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(::somnus::numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(::somnus::numel(shape), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values,
                    bool requires_grad) {
    return Tensor(std::move(shape), std::vector<double>(values), requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item: tensor has " + std::to_string(numel()) +
                         " elements, expected 1");
    }
    return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    return *this;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::shared_ptr<detail::Node> node) {
    Tensor t(std::move(shape), std::move(values), node != nullptr);
    t.impl_->node = std::move(node);
    return t;
}

IntTensor::IntTensor(Shape shape, std::vector<std::int64_t> values) {
    if (::somnus::numel(shape) != values.size()) {
        throw ShapeError("int tensor: shape " + shape_str(shape) + " implies " +
                         std::to_string(::somnus::numel(shape)) + " elements, got " +
                         std::to_string(values.size()));
    }
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
}

IntTensor IntTensor::from(Shape shape, std::initializer_list<std::int64_t> values) {
    return IntTensor(std::move(shape), std::vector<std::int64_t>(values));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward: loss must be a single-element tensor");
    }
    auto root = loss.impl();
    if (!root->requires_grad) return;

    // Post-order DFS over producer nodes; the graph is acyclic by
    // construction (every op creates a fresh output impl).
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        if (impl->node && next < impl->node->inputs.size()) {
            detail::TensorImpl* child = impl->node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(impl);
            stack.pop_back();
        }
    }

    // Interior tensors get a fresh grad each sweep; leaves accumulate across
    // sweeps until explicitly cleared.
    for (detail::TensorImpl* impl : order) {
        if (impl->node) impl->grad.clear();
    }

    const double one = 1.0;
    detail::accumulate_grad(root, &one, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorImpl* impl = *it;
        if (impl->node && impl->node->backward && !impl->grad.empty()) {
            impl->node->backward(*impl);
        }
    }
}

}  // namespace somnus
