#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ps/tensor.hpp"

namespace ps::ag {

/// When disabled, ops do not record parents or backward rules, so
/// intermediates are freed as soon as the last reference drops.
class GradMode {
public:
    static bool enabled();
    static void set(bool on);
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }

private:
    bool prev_;
};

/// One vertex of the reverse-mode tape: a value plus the rule that routes
/// its gradient back to the parents. The graph is acyclic by construction.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // lazily allocated, same shape as value
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor<T>& ensure_grad() {
        if (grad.data.empty()) grad = Tensor<T>(value.shape);
        return grad;
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && GradMode::enabled();
    n->name = std::move(name);
    return n;
}

template <typename T>
NodePtr<T> make_const(Tensor<T> value) {
    return make_leaf<T>(std::move(value), false);
}

/// Reverse sweep from a scalar root; fills `grad` on every node that
/// requires one. Seeds the root gradient with 1.
template <typename T>
void backward(const NodePtr<T>& root);

extern template void backward<float>(const NodePtr<float>&);
extern template void backward<double>(const NodePtr<double>&);

}  // namespace ps::ag
