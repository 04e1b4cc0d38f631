#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "somnus/shape.hpp"

namespace somnus {

class Tensor;

namespace detail {

struct TensorImpl;

// One operation record in the dynamically built computation graph. Nodes own
// their input impls, so a graph stays alive as long as its outputs do.
struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    // Reads the output's grad and accumulates into the inputs' grads.
    std::function<void(const TensorImpl&)> backward;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until a backward pass reaches it
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // producer; null for leaves
};

// Adds g into impl->grad (allocating zeros on first touch). No-op when the
// impl does not require grad.
void accumulate_grad(const std::shared_ptr<TensorImpl>& impl, const double* g,
                     std::size_t n);

}  // namespace detail

// Dense n-dimensional array of 64-bit floats, row-major, participating in a
// reverse-mode computation graph. Copies share storage; values are treated as
// immutable once a tensor has been fed into an op (only grad mutates).
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::initializer_list<double> values,
                       bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->values.size(); }

    std::vector<double>& data() { return impl_->values; }
    const std::vector<double>& data() const { return impl_->values; }

    // Value of a single-element tensor.
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg);

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const { return impl_->grad; }
    void clear_grad() { impl_->grad.clear(); }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

    // Internal: wraps an op result and attaches its graph node.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::shared_ptr<detail::Node> node);

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Integer tensor for token ids, labels, and argmax results. Deliberately not
// part of the computation graph: anything flowing through an IntTensor is a
// stop-gradient boundary.
class IntTensor {
public:
    IntTensor() = default;
    IntTensor(Shape shape, std::vector<std::int64_t> values);

    static IntTensor from(Shape shape, std::initializer_list<std::int64_t> values);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->values.size(); }
    std::vector<std::int64_t>& data() { return impl_->values; }
    const std::vector<std::int64_t>& data() const { return impl_->values; }

private:
    struct Impl {
        Shape shape;
        std::vector<std::int64_t> values;
    };
    std::shared_ptr<Impl> impl_;
};

// Reverse-mode sweep from a single-element loss. Walks the graph in reverse
// topological order and accumulates grads on every reachable tensor that
// requires them. Repeated calls accumulate; clear_grad()/zero_grad() reset.
void backward(const Tensor& loss);

}  // namespace somnus
