#include "ps/autodiff.hpp"

#include <unordered_set>

#include "ps/errors.hpp"

namespace ps::ag {

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set(bool on) { g_grad_enabled = on; }

template <typename T>
void backward(const NodePtr<T>& root) {
    if (!root) throw ConfigError("backward: null root");
    if (root->value.numel() != 1) throw ConfigError("backward: root must be scalar");

    // Iterative post-order DFS; parents precede children in `order`.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad().fill(T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && !n->grad.data.empty()) n->backward_fn(*n);
    }
}

template void backward<float>(const NodePtr<float>&);
template void backward<double>(const NodePtr<double>&);

}  // namespace ps::ag
