#pragma once

// Reverse-mode tape. Every differentiable op returns a Var whose node keeps
// its inputs alive and knows how to push its gradient back into them. The
// graph is freed when the last Var referencing the output goes away.

#include "cpga/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace cpga::nn {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Gradient buffer, zero-initialised on first use.
    Tensor<T>& grad_buffer() {
        if (grad.shape != value.shape || grad.data.size() != value.data.size()) grad = Tensor<T>(value.shape);
        return grad;
    }
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape; }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Gradient after backward(); empty tensor if none reached this node.
    const Tensor<T>& grad() const { return node_->grad; }
    void zero_grad() { node_->grad = Tensor<T>(); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Thread-local switch; while disabled, ops build no graph.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Builds the output node of an op. The backward closure is attached only if
/// grad mode is on and at least one input requires a gradient.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
    bool needs = false;
    if (GradMode::enabled())
        for (const auto& v : inputs) needs = needs || v.requires_grad();
    if (!needs) return Var<T>(std::move(value), false);
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& v : inputs) node->inputs.push_back(v.node());
    node->backward = std::move(backward);
    return Var<T>(std::move(node));
}

/// Seeds d(root)/d(root) = 1 (root must have one element) and runs the tape.
template <typename T>
void backward(const Var<T>& root);

/// Same, with an explicit upstream gradient for a non-scalar root.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed);

}  // namespace cpga::nn
