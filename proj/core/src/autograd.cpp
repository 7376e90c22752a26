#include "metahdr/autograd.hpp"

#include "op_support.hpp"

#include <algorithm>
#include <unordered_map>

namespace metahdr {

namespace {

// Marks every node that lies on a path from `root` to one of `targets`.
// Iterative post-order DFS; each node is expanded once.
template <class T>
std::vector<Node<T>*> nodes_on_paths(Node<T>* root, const std::unordered_map<Node<T>*, bool>& targets) {
    std::unordered_map<Node<T>*, bool> needed;
    struct Frame {
        Node<T>* node;
        std::size_t next_input;
    };
    std::vector<Frame> stack{{root, 0}};
    needed.emplace(root, false);
    while (!stack.empty()) {
        Frame& top = stack.back();
        Node<T>* node = top.node;
        if (top.next_input < node->inputs.size()) {
            Node<T>* child = node->inputs[top.next_input++].get();
            if (child && needed.find(child) == needed.end()) {
                needed.emplace(child, false);
                stack.push_back({child, 0});
            }
            continue;
        }
        bool on_path = targets.count(node) > 0;
        for (const auto& in : node->inputs)
            if (in && needed[in.get()]) on_path = true;
        needed[node] = on_path;
        stack.pop_back();
    }
    std::vector<Node<T>*> order;
    for (const auto& [node, on_path] : needed)
        if (on_path) order.push_back(node);
    std::sort(order.begin(), order.end(), [](Node<T>* a, Node<T>* b) { return a->seq > b->seq; });
    return order;
}

}  // namespace

template <class T>
Gradients<T> backward(const Tensor<T>& output, std::span<const Tensor<T>> wrt, bool create_graph) {
    if (output.numel() != 1) {
        throw ContractError("backward: output must have exactly one element, got shape " +
                            shape_string(output.shape()));
    }
    Gradients<T> result;
    result.values.resize(wrt.size());
    result.detached.assign(wrt.size(), false);

    std::unordered_map<Node<T>*, bool> targets;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        if (wrt[i].node())
            targets.emplace(wrt[i].node().get(), true);
        else
            result.detached[i] = true;
    }

    std::unordered_map<Node<T>*, Tensor<T>> grads;
    Node<T>* root = output.node().get();
    if (root && !targets.empty()) {
        GradModeGuard mode(create_graph);
        const auto order = nodes_on_paths(root, targets);
        std::unordered_map<Node<T>*, bool> on_path;
        for (auto* n : order) on_path.emplace(n, true);

        grads.emplace(root, Tensor<T>::full(output.shape(), T(1)));
        for (Node<T>* node : order) {
            auto it = grads.find(node);
            if (it == grads.end() || node->is_leaf()) continue;
            Tensor<T> g = it->second;
            if (!targets.count(node)) grads.erase(it);
            auto input_grads = node->backward(g);
            for (std::size_t k = 0; k < node->inputs.size(); ++k) {
                Node<T>* in = node->inputs[k].get();
                if (!in || !on_path.count(in) || !input_grads[k].defined()) continue;
                auto slot = grads.find(in);
                if (slot == grads.end())
                    grads.emplace(in, input_grads[k]);
                else
                    slot->second = add(slot->second, input_grads[k]);
            }
        }
    }

    for (std::size_t i = 0; i < wrt.size(); ++i) {
        auto it = wrt[i].node() ? grads.find(wrt[i].node().get()) : grads.end();
        if (it != grads.end()) {
            // Gradients always carry the shape of the requested tensor.
            result.values[i] = it->second.with_node(wrt[i].shape(), it->second.node());
        } else {
            result.values[i] = Tensor<T>::zeros(wrt[i].shape());
        }
    }
    return result;
}

template <class T>
Tensor<T> fd_gradient(const std::function<double(const Tensor<T>&)>& f, const Tensor<T>& x, double h) {
    if (!(h > 0.0)) throw ContractError("fd_gradient: step h must be positive");
    NoGradGuard no_grad;
    std::vector<T> base = x.to_vector();
    std::vector<T> grad(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        const T saved = base[i];
        base[i] = static_cast<T>(saved + h);
        const double up = f(Tensor<T>(x.shape(), base));
        base[i] = static_cast<T>(saved - h);
        const double down = f(Tensor<T>(x.shape(), base));
        base[i] = saved;
        grad[i] = static_cast<T>((up - down) / (2.0 * h));
    }
    return Tensor<T>(x.shape(), std::move(grad));
}

#define METAHDR_INSTANTIATE_AUTOGRAD(T)                                                                    \
    template Gradients<T> backward<T>(const Tensor<T>&, std::span<const Tensor<T>>, bool);                 \
    template Tensor<T> fd_gradient<T>(const std::function<double(const Tensor<T>&)>&, const Tensor<T>&, double);

METAHDR_FOR_EACH_FLOAT(METAHDR_INSTANTIATE_AUTOGRAD)

}  // namespace metahdr
