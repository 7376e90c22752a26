#pragma once

// Image-to-image UNet: `depth` contracting blocks separated by 2x2 max
// pooling, a bottom block that ends in a 2x upsample, `depth - 1` expanding
// blocks that consume skip connections, and a top block that emits three
// sigmoid channels.
//
// Working width at contracting level l is base_channels * 2^l.

#include "metahdr/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace metahdr {

enum class Architecture : std::uint32_t {
    unet = 0,
    /// Parameter-free network that returns its input. Used as a diagnostic
    /// stand-in ("no reconstruction").
    identity = 1,
};

struct UNetConfig {
    int depth = 4;
    int base_channels = 32;
    int in_channels = 3;
    int out_channels = 3;
    double eps = 1e-5;
    Architecture architecture = Architecture::unet;

    /// Throws ConfigError for depth < 1, base_channels < 4 or channel counts other than 3.
    void validate() const;
    /// Input H and W must be multiples of this value.
    std::int64_t spatial_multiple() const { return std::int64_t{1} << depth; }
    /// Channel width after contracting level `level`.
    std::int64_t width(int level) const { return std::int64_t{base_channels} << level; }

    bool operator==(const UNetConfig&) const = default;
};

struct ParamSpec {
    std::string name;
    Shape shape;
};

/// Ordered parameter names and shapes for a config.
std::vector<ParamSpec> param_schema(const UNetConfig& config);

/// Named network parameters in schema order.
template <class T>
class ParamSet {
public:
    ParamSet() = default;
    explicit ParamSet(UNetConfig config) : config_(config) {}

    const UNetConfig& config() const { return config_; }
    std::size_t size() const { return tensors_.size(); }
    bool empty() const { return tensors_.empty(); }
    const std::vector<std::string>& names() const { return names_; }
    std::span<const Tensor<T>> tensors() const { return tensors_; }
    const Tensor<T>& operator[](std::size_t i) const { return tensors_.at(i); }

    void insert(std::string name, Tensor<T> value);
    const Tensor<T>& at(std::string_view name) const;
    bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

    /// Same names and config with replacement tensors (shapes must match).
    ParamSet with_tensors(std::vector<Tensor<T>> tensors) const;
    /// Every tensor re-wrapped as a fresh graph leaf.
    ParamSet leaves() const;
    ParamSet detach() const;

    bool same_schema(const ParamSet& other) const;
    std::int64_t parameter_count() const;

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out(config_);
        for (std::size_t i = 0; i < size(); ++i) {
            auto v = tensors_[i].values();
            out.insert(names_[i], Tensor<U>(tensors_[i].shape(), std::vector<U>(v.begin(), v.end())));
        }
        return out;
    }

private:
    UNetConfig config_;
    std::vector<std::string> names_;
    std::vector<Tensor<T>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// params - step * grads, recorded in the graph (differentiable in both arguments).
template <class T>
ParamSet<T> sgd_update(const ParamSet<T>& params, std::span<const Tensor<T>> grads, double step);

/// He-normal conv weights (std = sqrt(2 / fan_in)), zero biases, unit gamma,
/// zero beta. Deterministic in `seed`.
template <class T>
ParamSet<T> init_params(const UNetConfig& config, std::uint64_t seed);

/// Records the shape leaving every block, for inspection and tests.
struct ForwardTrace {
    std::vector<std::pair<std::string, Shape>> blocks;
};

/// conv3x3 -> BN -> relu -> conv3x3 -> BN -> relu. The first conv maps the
/// level's input width to width(level); spatial dims are unchanged.
template <class T>
Tensor<T> contracting_block(const Tensor<T>& x, const ParamSet<T>& params, int level);

/// Contracting-block sequence at width(depth), then a 2x upsample back to width(depth - 1).
template <class T>
Tensor<T> bottom_block(const Tensor<T>& x, const ParamSet<T>& params);

/// concat(x_up, skip) -> conv3x3 (halve) -> relu -> conv3x3 -> relu -> upsample (halve) -> relu.
template <class T>
Tensor<T> expanding_block(const Tensor<T>& x_up, const Tensor<T>& skip, const ParamSet<T>& params, int level);

/// concat(x_up, skip) -> conv3x3 (halve) -> relu -> conv3x3 -> relu -> conv1x1 to RGB -> sigmoid.
template <class T>
Tensor<T> top_block(const Tensor<T>& x_up, const Tensor<T>& skip, const ParamSet<T>& params);

/// Full network on an N x 3 x H x W batch.
template <class T>
Tensor<T> forward(const ParamSet<T>& params, const Tensor<T>& image, ForwardTrace* trace = nullptr);

}  // namespace metahdr
