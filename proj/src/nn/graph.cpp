#include "dppp/nn/graph.hpp"

#include <unordered_set>

namespace dppp::nn {

void backward(const Var& root) {
    if (!root) {
        throw Error("backward: null root");
    }
    if (root->value.rows() != 1 || root->value.cols() != 1) {
        throw ShapeError("backward: root must be a scalar node");
    }
    if (!root->requires_grad) {
        return; // nothing downstream needs gradients
    }

    // Iterative post-order DFS; children end up after their parents, so the
    // reverse order visits each node before any of its parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next].get();
            ++next;
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) {
            (*it)->backward_fn();
        }
    }
}

bool all_finite(const Mat& m) {
    return m.allFinite();
}

} // namespace dppp::nn
