#include "cpga/autograd.hpp"

#include "cpga/error.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace cpga::nn {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
    if (!root.defined() || !root.requires_grad()) return;
    if (seed.shape != root.shape()) throw InvalidArgument("backward seed shape mismatch");

    // Iterative post-order DFS gives a topological order (inputs before users).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    auto& g = root.node()->grad_buffer();
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += seed.data[i];

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward) continue;
        if (node->grad.data.empty()) continue;  // nothing flowed here
        node->backward(*node);
        node->grad = Tensor<T>();  // intermediate gradients are not kept
    }
}

template <typename T>
void backward(const Var<T>& root) {
    if (root.value().numel() != 1) throw InvalidArgument("backward() without a seed needs a scalar root");
    backward(root, Tensor<T>(root.shape(), T(1)));
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);
template void backward<float>(const Var<float>&, const Tensor<float>&);
template void backward<double>(const Var<double>&, const Tensor<double>&);

}  // namespace cpga::nn
