#include "sodkit/tensor.hpp"

#include <unordered_set>

namespace sodkit {

void backward(const Value& root, const std::vector<double>* seed) {
    if (!root) throw ValidationError("backward: null root");
    if (seed) {
        if (static_cast<long long>(seed->size()) != root->size())
            throw DimensionError("backward: seed length " + std::to_string(seed->size()) +
                                 " does not match root shape " + shape_str(root->shape));
    } else if (root->size() != 1) {
        throw DimensionError("backward: non-scalar root needs an explicit seed");
    }

    // Iterative post-order DFS; reverse of the resulting order is a valid
    // reverse-topological schedule, so each node is visited exactly once.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        size_t next_child;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_child < f.n->parents.size()) {
            Node* c = f.n->parents[f.next_child++].get();
            if (visited.insert(c).second) stack.push_back({c, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    if (seed) {
        root->grad = *seed;
    } else {
        root->grad[0] += 1.0;
    }

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn();
    }
}

}  // namespace sodkit
