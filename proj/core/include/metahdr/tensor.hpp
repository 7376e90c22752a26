#pragma once

// Dense rank 1-4 tensors that optionally participate in a reverse-mode
// differentiation graph.
//
// A Tensor is a cheap handle: copies share the same immutable storage and the
// same graph node. No operation ever writes into an existing tensor, so a
// handle behaves like a value. The graph node (if any) identifies the tensor
// as a variable for `backward()`.

#include "metahdr/errors.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace metahdr {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <class T>
class Tensor;

template <class T>
using BackwardFn = std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_output)>;

/// One recorded operation. Every node has exactly one output; `seq` increases
/// monotonically with creation time, so sorting by descending `seq` yields a
/// valid reverse topological order of any graph.
template <class T>
struct Node {
    std::uint64_t seq = 0;
    const char* op = "leaf";
    Shape shape;
    std::vector<std::shared_ptr<Node<T>>> inputs;
    BackwardFn<T> backward;

    bool is_leaf() const { return !backward; }
};

std::uint64_t next_node_seq();

/// Thread-local switch controlling whether operations record graph nodes.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool enabled);
};

/// RAII scope that sets GradMode and restores the previous value.
class GradModeGuard {
public:
    explicit GradModeGuard(bool enabled) : previous_(GradMode::enabled()) {
        GradMode::set_enabled(enabled);
    }
    ~GradModeGuard() { GradMode::set_enabled(previous_); }
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

private:
    bool previous_;
};

class NoGradGuard : public GradModeGuard {
public:
    NoGradGuard() : GradModeGuard(false) {}
};

template <class T>
class Tensor {
public:
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "Tensor supports 32-bit and 64-bit floats only");
    using value_type = T;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        check_rank(shape_);
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_)) {
            throw DimensionError("tensor of shape " + shape_string(shape_) + " needs " +
                                 std::to_string(shape_numel(shape_)) + " values, got " +
                                 std::to_string(values.size()));
        }
        data_ = std::make_shared<const std::vector<T>>(std::move(values));
    }

    static Tensor full(Shape shape, T value) {
        const auto n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value));
    }
    static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    bool defined() const { return static_cast<bool>(data_); }
    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::int64_t numel() const { return defined() ? static_cast<std::int64_t>(data_->size()) : 0; }

    std::span<const T> values() const {
        return defined() ? std::span<const T>(*data_) : std::span<const T>();
    }
    std::vector<T> to_vector() const { return {values().begin(), values().end()}; }

    T item() const {
        if (numel() != 1) {
            throw ContractError("item() on tensor of shape " + shape_string(shape_));
        }
        return (*data_)[0];
    }

    bool requires_grad() const { return static_cast<bool>(node_); }
    const std::shared_ptr<Node<T>>& node() const { return node_; }

    /// Same storage, no graph node.
    Tensor detach() const {
        Tensor out = *this;
        out.node_.reset();
        return out;
    }

    /// Same storage, attached to a fresh leaf node (a new variable).
    Tensor leaf() const {
        Tensor out = detach();
        auto node = std::make_shared<Node<T>>();
        node->seq = next_node_seq();
        node->shape = shape_;
        out.node_ = std::move(node);
        return out;
    }

    /// Same storage viewed under a new shape with equal element count.
    /// Used internally by operations; the result carries `node`.
    Tensor with_node(Shape shape, std::shared_ptr<Node<T>> node) const {
        check_rank(shape);
        if (shape_numel(shape) != numel()) {
            throw DimensionError("cannot view " + shape_string(shape_) + " as " + shape_string(shape));
        }
        Tensor out = *this;
        out.shape_ = std::move(shape);
        out.node_ = std::move(node);
        return out;
    }

private:
    static void check_rank(const Shape& shape) {
        if (shape.empty() || shape.size() > 4) {
            throw DimensionError("tensor rank must be 1-4, got shape " + shape_string(shape));
        }
        for (auto extent : shape) {
            if (extent <= 0) {
                throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
            }
        }
    }

    Shape shape_;
    std::shared_ptr<const std::vector<T>> data_;
    std::shared_ptr<Node<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace metahdr
