#pragma once

#include "metahdr/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace metahdr {

template <class T>
struct Gradients {
    /// One gradient per requested tensor, shaped like it.
    std::vector<Tensor<T>> values;
    /// True where the requested tensor had no graph node; its gradient is zero.
    std::vector<bool> detached;

    bool any_detached() const {
        for (bool d : detached)
            if (d) return true;
        return false;
    }
};

/// Reverse-mode gradient of a single-element `output` with respect to each
/// tensor in `wrt` (leaves or intermediate results). With `create_graph`
/// the returned gradients are recorded in the graph and can be
/// differentiated again; otherwise they are constants.
template <class T>
Gradients<T> backward(const Tensor<T>& output, std::span<const Tensor<T>> wrt, bool create_graph = false);

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// element of x. `f` is evaluated with graph recording disabled.
template <class T>
Tensor<T> fd_gradient(const std::function<double(const Tensor<T>&)>& f, const Tensor<T>& x, double h);

}  // namespace metahdr
