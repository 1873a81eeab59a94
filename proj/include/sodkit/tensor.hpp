#pragma once

#include <functional>
#include <memory>

#include "sodkit/common.hpp"

namespace sodkit {

class Node;
using Value = std::shared_ptr<Node>;

// One recorded tensor in the dynamic compute graph. Values are immutable
// after the forward pass that created them; only `grad` mutates, and only
// during a single backward() traversal.
class Node {
  public:
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched; empty == all zero
    bool requires_grad = false;

    std::vector<Value> parents;
    std::function<void()> backward_fn;  // accumulates into parents' grads

    Node(Shape s, bool rg) : shape(std::move(s)), requires_grad(rg) {
        data.assign(static_cast<size_t>(numel(shape)), 0.0);
    }

    long long size() const { return numel(shape); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }

    void zero_grad() { grad.assign(data.size(), 0.0); }
};

inline Value make_value(Shape s, bool requires_grad = false) {
    return std::make_shared<Node>(std::move(s), requires_grad);
}

inline Value make_value(Shape s, std::vector<double> d, bool requires_grad = false) {
    auto v = std::make_shared<Node>(std::move(s), requires_grad);
    if (static_cast<long long>(d.size()) != v->size())
        throw DimensionError("make_value: data length " + std::to_string(d.size()) +
                             " does not match shape " + shape_str(v->shape));
    v->data = std::move(d);
    return v;
}

inline Value scalar_value(double x, bool requires_grad = false) {
    return make_value(Shape{1}, std::vector<double>{x}, requires_grad);
}

// Reverse accumulation over the graph rooted at `root`. When `seed` is null
// the root must be a scalar and is seeded with 1. Leaves off every path keep
// an all-zero (possibly unallocated) gradient.
void backward(const Value& root, const std::vector<double>* seed = nullptr);

}  // namespace sodkit
