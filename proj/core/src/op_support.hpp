#pragma once

// Shared plumbing for operation implementations: finite checks and graph
// recording. Not part of the installed interface.

#include "metahdr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace metahdr::detail {

template <class T>
std::string describe(const Tensor<T>& t) {
    std::ostringstream os;
    os << shape_string(t.shape());
    auto v = t.values();
    if (v.empty()) return os.str();
    double lo = v[0], hi = v[0], total = 0.0;
    for (T x : v) {
        lo = std::min<double>(lo, x);
        hi = std::max<double>(hi, x);
        total += x;
    }
    os << " min=" << lo << " max=" << hi << " mean=" << total / static_cast<double>(v.size());
    return os.str();
}

template <class T>
void check_finite(const char* op, const std::vector<T>& data, std::initializer_list<Tensor<T>> inputs) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i])) {
            std::ostringstream os;
            os << op << " produced a non-finite value at flat index " << i << "; inputs:";
            for (const auto& in : inputs) os << " [" << describe(in) << ']';
            throw NumericError(os.str());
        }
    }
}

/// Wraps freshly computed data as the output of `op`. A graph node is recorded
/// only when grad mode is on and at least one input is a graph variable.
/// `backward` returns one gradient per input, in input order; entries for
/// constant inputs are ignored.
template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> inputs, BackwardFn<T> backward) {
    check_finite(op, data, inputs);
    Tensor<T> out(std::move(shape), std::move(data));
    if (!GradMode::enabled()) return out;
    const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor<T>& in) { return in.requires_grad(); });
    if (!tracked) return out;
    auto node = std::make_shared<Node<T>>();
    node->seq = next_node_seq();
    node->op = op;
    node->shape = out.shape();
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
    return out.with_node(out.shape(), std::move(node));
}

inline void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (a != b) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                             shape_string(b));
    }
}

inline void require_rank4(const char* op, const char* what, const Shape& s) {
    if (s.size() != 4) {
        throw DimensionError(std::string(op) + ": " + what + " must be rank 4 (N,C,H,W), got " +
                             shape_string(s));
    }
}

/// Constant (graph-free) tensor of the same shape holding f(x) elementwise.
template <class T, class F>
Tensor<T> constant_map(const Tensor<T>& x, F f) {
    auto v = x.values();
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
    return Tensor<T>(x.shape(), std::move(out));
}

}  // namespace metahdr::detail

#define METAHDR_FOR_EACH_FLOAT(MACRO) \
    MACRO(float)                      \
    MACRO(double)
