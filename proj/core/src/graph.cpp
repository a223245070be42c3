#include "cotsnet/graph.hpp"

#include <stdexcept>

namespace cots::nn {

NodePtr Graph::make(Tensor value, std::vector<NodePtr> inputs,
                    std::function<void(Node&)> backward_fn, bool forces_grad) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool rg = forces_grad;
    for (const auto& in : inputs) rg = rg || in->requires_grad;
    node->requires_grad = grad_enabled_ && rg;
    if (node->requires_grad) {
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(backward_fn);
    }
    node->tape_index = static_cast<int>(tape_.size());
    tape_.push_back(node);
    return node;
}

NodePtr Graph::constant(Tensor v) {
    return make(std::move(v), {}, nullptr, false);
}

NodePtr Graph::param(Parameter& p) {
    Parameter* pp = &p;
    return make(p.value, {},
                [pp](Node& n) {
                    float* g = pp->grad.data();
                    const float* ng = n.grad.data();
                    for (int64_t i = 0; i < n.grad.numel(); ++i) g[i] += ng[i];
                },
                true);
}

NodePtr Graph::detach(const NodePtr& x) {
    return make(x->value, {}, nullptr, false);
}

void Graph::backward(const NodePtr& root) {
    if (!grad_enabled_)
        throw std::logic_error("backward on an inference graph");
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward root must be scalar");
    if (!root->requires_grad) return;

    // Restrict the sweep to the subgraph feeding this root so that several
    // disjoint objectives can run backward on one tape without re-firing
    // closures of an earlier pass.
    std::vector<char> in_scope(static_cast<size_t>(root->tape_index) + 1, 0);
    std::vector<Node*> stack{root.get()};
    in_scope[static_cast<size_t>(root->tape_index)] = 1;
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        for (const auto& in : n->inputs) {
            if (!in->requires_grad) continue;
            if (!in_scope[static_cast<size_t>(in->tape_index)]) {
                in_scope[static_cast<size_t>(in->tape_index)] = 1;
                stack.push_back(in.get());
            }
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0f;
    for (int i = root->tape_index; i >= 0; --i) {
        if (!in_scope[static_cast<size_t>(i)]) continue;
        Node& n = *tape_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.has_grad() || !n.backward_fn) continue;
        n.backward_fn(n);
    }
}

} // namespace cots::nn
