#include "op_support.hpp"

#include <memory>

namespace metahdr {

namespace {

using Index = std::shared_ptr<const std::vector<std::int64_t>>;

template <class T>
Tensor<T> index_scatter(const Tensor<T>& g, const Index& index, const Shape& shape);

// out[i] = x[index[i]]
template <class T>
Tensor<T> index_gather(const Tensor<T>& x, const Index& index, const Shape& shape) {
    auto v = x.values();
    std::vector<T> out(index->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[static_cast<std::size_t>((*index)[i])];
    return detail::make_result<T>("maxpool2", shape, std::move(out), {x},
                                  [index, in_shape = x.shape()](const Tensor<T>& g) {
                                      return std::vector<Tensor<T>>{index_scatter(g, index, in_shape)};
                                  });
}

// Adjoint of index_gather: out[index[i]] += g[i]
template <class T>
Tensor<T> index_scatter(const Tensor<T>& g, const Index& index, const Shape& shape) {
    std::vector<T> out(static_cast<std::size_t>(shape_numel(shape)), T(0));
    auto v = g.values();
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<std::size_t>((*index)[i])] += v[i];
    return detail::make_result<T>("maxpool2_grad", shape, std::move(out), {g},
                                  [index, out_shape = g.shape()](const Tensor<T>& up) {
                                      return std::vector<Tensor<T>>{index_gather(up, index, out_shape)};
                                  });
}

}  // namespace

template <class T>
Tensor<T> maxpool2(const Tensor<T>& input) {
    detail::require_rank4("maxpool2", "input", input.shape());
    const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("maxpool2: spatial dims must be even, got H=" + std::to_string(h) +
                             " W=" + std::to_string(w));
    }
    const auto ho = h / 2, wo = w / 2;
    auto v = input.values();
    auto index = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n * c * ho * wo));
    std::size_t k = 0;
    for (std::int64_t plane = 0; plane < n * c; ++plane)
        for (std::int64_t i = 0; i < ho; ++i)
            for (std::int64_t j = 0; j < wo; ++j) {
                const std::int64_t base = plane * h * w + 2 * i * w + 2 * j;
                // Row-major window order; strict comparison keeps the first maximum.
                std::int64_t best = base;
                for (std::int64_t cand : {base + 1, base + w, base + w + 1})
                    if (v[static_cast<std::size_t>(cand)] > v[static_cast<std::size_t>(best)]) best = cand;
                (*index)[k++] = best;
            }
    return index_gather<T>(input, std::move(index), {n, c, ho, wo});
}

template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
    detail::require_rank4("batchnorm2d", "input", input.shape());
    const auto c = input.dim(1);
    const auto count = input.dim(0) * input.dim(2) * input.dim(3);
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw DimensionError("batchnorm2d: gamma/beta must have shape (" + std::to_string(c) + "), got " +
                             shape_string(gamma.shape()) + " and " + shape_string(beta.shape()));
    }
    if (count < 2) {
        throw DimensionError("batchnorm2d: need N*H*W >= 2 per channel, got " + shape_string(input.shape()));
    }
    const double inv_count = 1.0 / static_cast<double>(count);
    const auto& shape = input.shape();
    auto centered = sub(input, channel_broadcast(scale(channel_sum(input), inv_count), shape));
    auto variance = scale(channel_sum(mul(centered, centered)), inv_count);
    auto inv_std = pow_scalar(add_scalar(variance, eps), -0.5);
    return add(mul(centered, channel_broadcast(mul(inv_std, gamma), shape)), channel_broadcast(beta, shape));
}

#define METAHDR_INSTANTIATE_POOL_NORM(T)                                                               \
    template Tensor<T> maxpool2<T>(const Tensor<T>&);                                                  \
    template Tensor<T> batchnorm2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

METAHDR_FOR_EACH_FLOAT(METAHDR_INSTANTIATE_POOL_NORM)

}  // namespace metahdr
