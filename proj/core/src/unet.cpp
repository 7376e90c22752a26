#include "metahdr/unet.hpp"

#include "metahdr/ops.hpp"
#include "op_support.hpp"

#include <cmath>
#include <random>

namespace metahdr {

void UNetConfig::validate() const {
    if (architecture == Architecture::identity) return;
    if (depth < 1) throw ConfigError("UNet depth must be >= 1, got " + std::to_string(depth));
    if (depth > 12) throw ConfigError("UNet depth must be <= 12, got " + std::to_string(depth));
    if (base_channels < 4) throw ConfigError("UNet base_channels must be >= 4, got " + std::to_string(base_channels));
    if (in_channels != 3 || out_channels != 3) throw ConfigError("UNet maps 3 channels to 3 channels");
    if (!(eps >= 0.0)) throw ConfigError("batch-norm eps must be non-negative");
}

namespace {

std::string level_prefix(const char* kind, int level) { return std::string(kind) + std::to_string(level); }

void add_conv(std::vector<ParamSpec>& out, const std::string& name, std::int64_t in, std::int64_t filters,
              std::int64_t k) {
    out.push_back({name + ".weight", {filters, in, k, k}});
    out.push_back({name + ".bias", {filters}});
}

void add_norm(std::vector<ParamSpec>& out, const std::string& name, std::int64_t channels) {
    out.push_back({name + ".gamma", {channels}});
    out.push_back({name + ".beta", {channels}});
}

void add_upconv(std::vector<ParamSpec>& out, const std::string& name, std::int64_t in, std::int64_t filters) {
    out.push_back({name + ".weight", {in, filters, 2, 2}});
    out.push_back({name + ".bias", {filters}});
}

std::int64_t contracting_input_width(const UNetConfig& config, int level) {
    return level == 0 ? config.in_channels : config.width(level - 1);
}

}  // namespace

std::vector<ParamSpec> param_schema(const UNetConfig& config) {
    config.validate();
    std::vector<ParamSpec> out;
    if (config.architecture == Architecture::identity) return out;
    for (int level = 0; level < config.depth; ++level) {
        const auto p = level_prefix("down", level);
        const auto in = contracting_input_width(config, level), w = config.width(level);
        add_conv(out, p + ".conv1", in, w, 3);
        add_norm(out, p + ".bn1", w);
        add_conv(out, p + ".conv2", w, w, 3);
        add_norm(out, p + ".bn2", w);
    }
    {
        const auto in = config.width(config.depth - 1), w = config.width(config.depth);
        add_conv(out, "bottom.conv1", in, w, 3);
        add_norm(out, "bottom.bn1", w);
        add_conv(out, "bottom.conv2", w, w, 3);
        add_norm(out, "bottom.bn2", w);
        add_upconv(out, "bottom.up", w, in);
    }
    for (int level = config.depth - 1; level >= 1; --level) {
        const auto p = level_prefix("up", level);
        const auto w = config.width(level);
        add_conv(out, p + ".conv1", 2 * w, w, 3);
        add_conv(out, p + ".conv2", w, w, 3);
        add_upconv(out, p + ".up", w, w / 2);
    }
    const auto w = config.width(0);
    add_conv(out, "top.conv1", 2 * w, w, 3);
    add_conv(out, "top.conv2", w, w, 3);
    add_conv(out, "top.out", w, config.out_channels, 1);
    return out;
}

template <class T>
void ParamSet<T>::insert(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    index_.emplace(name, tensors_.size());
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
}

template <class T>
const Tensor<T>& ParamSet<T>::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
    return tensors_[it->second];
}

template <class T>
ParamSet<T> ParamSet<T>::with_tensors(std::vector<Tensor<T>> tensors) const {
    if (tensors.size() != tensors_.size()) {
        throw DimensionError("parameter count mismatch: " + std::to_string(tensors.size()) + " vs " +
                             std::to_string(tensors_.size()));
    }
    ParamSet out(config_);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        detail::require_same_shape(names_[i].c_str(), tensors[i].shape(), tensors_[i].shape());
        out.insert(names_[i], std::move(tensors[i]));
    }
    return out;
}

template <class T>
ParamSet<T> ParamSet<T>::leaves() const {
    std::vector<Tensor<T>> out;
    out.reserve(size());
    for (const auto& t : tensors_) out.push_back(t.leaf());
    return with_tensors(std::move(out));
}

template <class T>
ParamSet<T> ParamSet<T>::detach() const {
    std::vector<Tensor<T>> out;
    out.reserve(size());
    for (const auto& t : tensors_) out.push_back(t.detach());
    return with_tensors(std::move(out));
}

template <class T>
bool ParamSet<T>::same_schema(const ParamSet& other) const {
    if (names_ != other.names_) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (tensors_[i].shape() != other.tensors_[i].shape()) return false;
    return true;
}

template <class T>
std::int64_t ParamSet<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

template <class T>
ParamSet<T> sgd_update(const ParamSet<T>& params, std::span<const Tensor<T>> grads, double step) {
    if (grads.size() != params.size()) {
        throw DimensionError("sgd_update: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    }
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back(sub(params[i], scale(grads[i], step)));
    return params.with_tensors(std::move(out));
}

template <class T>
ParamSet<T> init_params(const UNetConfig& config, std::uint64_t seed) {
    ParamSet<T> params(config);
    std::mt19937_64 rng(seed);
    for (const auto& spec : param_schema(config)) {
        const auto n = static_cast<std::size_t>(shape_numel(spec.shape));
        std::vector<T> values(n, T(0));
        const auto& name = spec.name;
        if (name.ends_with(".gamma")) {
            std::fill(values.begin(), values.end(), T(1));
        } else if (name.ends_with(".weight")) {
            // Upsample kernels (C x F x 2 x 2, stride 2) give every output
            // exactly C inputs; regular convs see C * k * k.
            const bool upsample = name.ends_with(".up.weight");
            const double fan_in = upsample ? static_cast<double>(spec.shape[0])
                                           : static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]);
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
            for (auto& v : values) v = static_cast<T>(dist(rng));
        }
        params.insert(spec.name, Tensor<T>(spec.shape, std::move(values)));
    }
    return params;
}

namespace {

template <class T>
Tensor<T> conv(const Tensor<T>& x, const ParamSet<T>& p, const std::string& name, int padding = 1) {
    return conv2d(x, p.at(name + ".weight"), p.at(name + ".bias"), padding);
}

template <class T>
Tensor<T> norm(const Tensor<T>& x, const ParamSet<T>& p, const std::string& name) {
    return batchnorm2d(x, p.at(name + ".gamma"), p.at(name + ".beta"), p.config().eps);
}

template <class T>
Tensor<T> upconv(const Tensor<T>& x, const ParamSet<T>& p, const std::string& name) {
    return conv_transpose2d(x, p.at(name + ".weight"), p.at(name + ".bias"));
}

template <class T>
void require_channels(const char* block, const Tensor<T>& x, std::int64_t expected) {
    detail::require_rank4(block, "input", x.shape());
    if (x.dim(1) != expected) {
        throw DimensionError(std::string(block) + ": expected " + std::to_string(expected) +
                             " input channels, got shape " + shape_string(x.shape()));
    }
}

template <class T>
Tensor<T> double_conv_bn(const Tensor<T>& x, const ParamSet<T>& p, const std::string& prefix) {
    auto h = relu(norm(conv(x, p, prefix + ".conv1"), p, prefix + ".bn1"));
    return relu(norm(conv(h, p, prefix + ".conv2"), p, prefix + ".bn2"));
}

}  // namespace

template <class T>
Tensor<T> contracting_block(const Tensor<T>& x, const ParamSet<T>& params, int level) {
    const auto& cfg = params.config();
    if (level < 0 || level >= cfg.depth) throw ContractError("contracting_block: level out of range");
    require_channels("contracting_block", x, contracting_input_width(cfg, level));
    return double_conv_bn(x, params, level_prefix("down", level));
}

template <class T>
Tensor<T> bottom_block(const Tensor<T>& x, const ParamSet<T>& params) {
    require_channels("bottom_block", x, params.config().width(params.config().depth - 1));
    return upconv(double_conv_bn(x, params, "bottom"), params, "bottom.up");
}

template <class T>
Tensor<T> expanding_block(const Tensor<T>& x_up, const Tensor<T>& skip, const ParamSet<T>& params, int level) {
    const auto& cfg = params.config();
    if (level < 1 || level >= cfg.depth) throw ContractError("expanding_block: level out of range");
    require_channels("expanding_block", x_up, cfg.width(level));
    require_channels("expanding_block", skip, cfg.width(level));
    const auto p = level_prefix("up", level);
    auto h = relu(conv(concat_channels(x_up, skip), params, p + ".conv1"));
    h = relu(conv(h, params, p + ".conv2"));
    return relu(upconv(h, params, p + ".up"));
}

template <class T>
Tensor<T> top_block(const Tensor<T>& x_up, const Tensor<T>& skip, const ParamSet<T>& params) {
    const auto w = params.config().width(0);
    require_channels("top_block", x_up, w);
    require_channels("top_block", skip, w);
    auto h = relu(conv(concat_channels(x_up, skip), params, "top.conv1"));
    h = relu(conv(h, params, "top.conv2"));
    return sigmoid(conv(h, params, "top.out", 0));
}

template <class T>
Tensor<T> forward(const ParamSet<T>& params, const Tensor<T>& image, ForwardTrace* trace) {
    const auto& cfg = params.config();
    detail::require_rank4("unet forward", "image", image.shape());
    if (image.dim(1) != cfg.in_channels) {
        throw DimensionError("unet forward: expected " + std::to_string(cfg.in_channels) +
                             " input channels, got shape " + shape_string(image.shape()));
    }
    if (cfg.architecture == Architecture::identity) return image;

    const auto multiple = cfg.spatial_multiple();
    if (image.dim(2) % multiple != 0 || image.dim(3) % multiple != 0) {
        throw DimensionError("unet forward: H and W must be multiples of " + std::to_string(multiple) +
                             " for depth " + std::to_string(cfg.depth) + ", got " + shape_string(image.shape()));
    }
    auto record = [trace](std::string name, const Tensor<T>& t) {
        if (trace) trace->blocks.emplace_back(std::move(name), t.shape());
    };

    std::vector<Tensor<T>> skips;
    Tensor<T> h = image;
    for (int level = 0; level < cfg.depth; ++level) {
        if (level > 0) h = maxpool2(h);
        h = contracting_block(h, params, level);
        record(level_prefix("down", level), h);
        skips.push_back(h);
    }
    h = bottom_block(maxpool2(h), params);
    record("bottom", h);
    for (int level = cfg.depth - 1; level >= 1; --level) {
        h = expanding_block(h, skips[static_cast<std::size_t>(level)], params, level);
        record(level_prefix("up", level), h);
    }
    h = top_block(h, skips[0], params);
    record("top", h);
    return h;
}

#define METAHDR_INSTANTIATE_UNET(T)                                                                      \
    template class ParamSet<T>;                                                                          \
    template ParamSet<T> sgd_update<T>(const ParamSet<T>&, std::span<const Tensor<T>>, double);          \
    template ParamSet<T> init_params<T>(const UNetConfig&, std::uint64_t);                               \
    template Tensor<T> contracting_block<T>(const Tensor<T>&, const ParamSet<T>&, int);                  \
    template Tensor<T> bottom_block<T>(const Tensor<T>&, const ParamSet<T>&);                            \
    template Tensor<T> expanding_block<T>(const Tensor<T>&, const Tensor<T>&, const ParamSet<T>&, int);  \
    template Tensor<T> top_block<T>(const Tensor<T>&, const Tensor<T>&, const ParamSet<T>&);             \
    template Tensor<T> forward<T>(const ParamSet<T>&, const Tensor<T>&, ForwardTrace*);

METAHDR_FOR_EACH_FLOAT(METAHDR_INSTANTIATE_UNET)

}  // namespace metahdr
