#include "op_support.hpp"

#include <cmath>
#include <limits>

namespace metahdr {

using detail::make_result;
using detail::require_same_shape;

namespace {

template <class T, class F>
std::vector<T> zip_map(const Tensor<T>& a, const Tensor<T>& b, F f) {
    auto x = a.values();
    auto y = b.values();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
    return out;
}

template <class T, class F>
std::vector<T> map(const Tensor<T>& a, F f) {
    auto x = a.values();
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

template <class T>
Tensor<T> embed_channels(const Tensor<T>& g, std::int64_t begin, std::int64_t total);

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a.shape(), b.shape());
    return make_result<T>("add", a.shape(), zip_map(a, b, [](T x, T y) { return x + y; }), {a, b},
                          [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("sub", a.shape(), b.shape());
    return make_result<T>("sub", a.shape(), zip_map(a, b, [](T x, T y) { return x - y; }), {a, b},
                          [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g, scale(g, -1.0)}; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a.shape(), b.shape());
    return make_result<T>("mul", a.shape(), zip_map(a, b, [](T x, T y) { return x * y; }), {a, b},
                          [a, b](const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{mul(g, b), mul(g, a)};
                          });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("div", a.shape(), b.shape());
    return make_result<T>("div", a.shape(), zip_map(a, b, [](T x, T y) { return x / y; }), {a, b},
                          [a, b](const Tensor<T>& g) {
                              auto ga = div(g, b);
                              return std::vector<Tensor<T>>{ga, scale(div(mul(ga, a), b), -1.0)};
                          });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, double factor) {
    const T f = static_cast<T>(factor);
    return make_result<T>("scale", a.shape(), map(a, [f](T x) { return x * f; }), {a},
                          [factor](const Tensor<T>& g) { return std::vector<Tensor<T>>{scale(g, factor)}; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, double value) {
    const T c = static_cast<T>(value);
    return make_result<T>("add_scalar", a.shape(), map(a, [c](T x) { return x + c; }), {a},
                          [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g}; });
}

template <class T>
Tensor<T> pow_scalar(const Tensor<T>& a, double p) {
    const T e = static_cast<T>(p);
    auto f = [p, e](T x) {
        if (p == 0.5) return std::sqrt(x);
        if (p == 2.0) return x * x;
        if (p == -1.0) return T(1) / x;
        return std::pow(x, e);
    };
    return make_result<T>("pow_scalar", a.shape(), map(a, f), {a},
                          [a, p](const Tensor<T>& g) {
                              if (p == 0.0) return std::vector<Tensor<T>>{Tensor<T>::zeros(a.shape())};
                              if (p == 1.0) return std::vector<Tensor<T>>{g};
                              return std::vector<Tensor<T>>{mul(g, scale(pow_scalar(a, p - 1.0), p))};
                          });
}

template <class T>
Tensor<T> abs(const Tensor<T>& a) {
    return make_result<T>("abs", a.shape(), map(a, [](T x) { return std::abs(x); }), {a},
                          [a](const Tensor<T>& g) {
                              auto sign = detail::constant_map(a, [](T x) {
                                  return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
                              });
                              return std::vector<Tensor<T>>{mul(g, sign)};
                          });
}

template <class T>
Tensor<T> clamp_min(const Tensor<T>& a, double floor) {
    const T c = static_cast<T>(floor);
    return make_result<T>("clamp_min", a.shape(), map(a, [c](T x) { return x > c ? x : c; }), {a},
                          [a, c](const Tensor<T>& g) {
                              auto mask = detail::constant_map(a, [c](T x) { return x > c ? T(1) : T(0); });
                              return std::vector<Tensor<T>>{mul(g, mask)};
                          });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return make_result<T>("relu", x.shape(), map(x, [](T v) { return v > T(0) ? v : T(0); }), {x},
                          [x](const Tensor<T>& g) {
                              auto mask = detail::constant_map(x, [](T v) { return v > T(0) ? T(1) : T(0); });
                              return std::vector<Tensor<T>>{mul(g, mask)};
                          });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    // Clamped so the result stays strictly inside (0, 1) even where the
    // exact value rounds to an endpoint.
    constexpr T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    auto f = [lo, hi](T v) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
        return std::clamp(static_cast<T>(s), lo, hi);
    };
    return make_result<T>("sigmoid", x.shape(), map(x, f), {x}, [x](const Tensor<T>& g) {
        auto s = sigmoid(x);
        return std::vector<Tensor<T>>{mul(g, mul(s, add_scalar(scale(s, -1.0), 1.0)))};
    });
}

template <class T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
    return kind == Activation::relu ? relu(x) : sigmoid(x);
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    double total = 0.0;
    for (T v : x.values()) total += v;
    return make_result<T>("sum", {1}, {static_cast<T>(total)}, {x}, [shape = x.shape()](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{broadcast_scalar(g, shape)};
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

template <class T>
Tensor<T> broadcast_scalar(const Tensor<T>& s, const Shape& shape) {
    if (s.numel() != 1) {
        throw DimensionError("broadcast_scalar: expected a single element, got " + shape_string(s.shape()));
    }
    std::vector<T> out(static_cast<std::size_t>(shape_numel(shape)), s.values()[0]);
    return make_result<T>("broadcast_scalar", shape, std::move(out), {s}, [](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{sum(g)};
    });
}

template <class T>
Tensor<T> channel_sum(const Tensor<T>& x) {
    detail::require_rank4("channel_sum", "input", x.shape());
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<double> acc(static_cast<std::size_t>(c), 0.0);
    auto v = x.values();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t k = 0; k < c; ++k) {
            const T* p = v.data() + (i * c + k) * hw;
            double s = 0.0;
            for (std::int64_t j = 0; j < hw; ++j) s += p[j];
            acc[static_cast<std::size_t>(k)] += s;
        }
    std::vector<T> out(acc.begin(), acc.end());
    return make_result<T>("channel_sum", {c}, std::move(out), {x}, [shape = x.shape()](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{channel_broadcast(g, shape)};
    });
}

template <class T>
Tensor<T> channel_broadcast(const Tensor<T>& v, const Shape& shape) {
    detail::require_rank4("channel_broadcast", "target shape", shape);
    if (v.rank() != 1 || v.dim(0) != shape[1]) {
        throw DimensionError("channel_broadcast: vector " + shape_string(v.shape()) +
                             " does not match channel axis of " + shape_string(shape));
    }
    const auto n = shape[0], c = shape[1], hw = shape[2] * shape[3];
    std::vector<T> out(static_cast<std::size_t>(n * c * hw));
    auto src = v.values();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t k = 0; k < c; ++k)
            std::fill_n(out.begin() + (i * c + k) * hw, hw, src[static_cast<std::size_t>(k)]);
    return make_result<T>("channel_broadcast", shape, std::move(out), {v}, [](const Tensor<T>& g) {
        return std::vector<Tensor<T>>{channel_sum(g)};
    });
}

template <class T>
Tensor<T> pixel_sum(const Tensor<T>& x) {
    detail::require_rank4("pixel_sum", "input", x.shape());
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> out(static_cast<std::size_t>(n * hw), T(0));
    auto v = x.values();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < hw; ++j) {
            double s = 0.0;
            for (std::int64_t k = 0; k < c; ++k) s += v[static_cast<std::size_t>((i * c + k) * hw + j)];
            out[static_cast<std::size_t>(i * hw + j)] = static_cast<T>(s);
        }
    return make_result<T>("pixel_sum", {n, 1, x.dim(2), x.dim(3)}, std::move(out), {x},
                          [c](const Tensor<T>& g) { return std::vector<Tensor<T>>{pixel_broadcast(g, c)}; });
}

template <class T>
Tensor<T> pixel_broadcast(const Tensor<T>& v, std::int64_t channels) {
    detail::require_rank4("pixel_broadcast", "input", v.shape());
    if (v.dim(1) != 1 || channels <= 0) {
        throw DimensionError("pixel_broadcast: expected (N,1,H,W) input and positive channel count, got " +
                             shape_string(v.shape()));
    }
    const auto n = v.dim(0), hw = v.dim(2) * v.dim(3);
    std::vector<T> out(static_cast<std::size_t>(n * channels * hw));
    auto src = v.values();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t k = 0; k < channels; ++k)
            std::copy_n(src.begin() + i * hw, hw, out.begin() + (i * channels + k) * hw);
    return make_result<T>("pixel_broadcast", {n, channels, v.dim(2), v.dim(3)}, std::move(out), {v},
                          [](const Tensor<T>& g) { return std::vector<Tensor<T>>{pixel_sum(g)}; });
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank4("concat_channels", "first input", a.shape());
    detail::require_rank4("concat_channels", "second input", b.shape());
    const char* axes[] = {"N", "C", "H", "W"};
    for (int axis : {0, 2, 3}) {
        if (a.dim(axis) != b.dim(axis)) {
            throw DimensionError(std::string("concat_channels: axis ") + axes[axis] + " differs: " +
                                 shape_string(a.shape()) + " vs " + shape_string(b.shape()));
        }
    }
    const auto n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    std::vector<T> out(static_cast<std::size_t>(n * (ca + cb) * hw));
    auto va = a.values();
    auto vb = b.values();
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(va.begin() + i * ca * hw, ca * hw, out.begin() + i * (ca + cb) * hw);
        std::copy_n(vb.begin() + i * cb * hw, cb * hw, out.begin() + (i * (ca + cb) + ca) * hw);
    }
    return make_result<T>("concat_channels", {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                          [ca, cb](const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{slice_channels(g, 0, ca), slice_channels(g, ca, cb)};
                          });
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count) {
    detail::require_rank4("slice_channels", "input", x.shape());
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (begin < 0 || count <= 0 || begin + count > c) {
        throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") outside channel axis of " +
                             shape_string(x.shape()));
    }
    std::vector<T> out(static_cast<std::size_t>(n * count * hw));
    auto v = x.values();
    for (std::int64_t i = 0; i < n; ++i)
        std::copy_n(v.begin() + (i * c + begin) * hw, count * hw, out.begin() + i * count * hw);
    return make_result<T>("slice_channels", {n, count, x.dim(2), x.dim(3)}, std::move(out), {x},
                          [begin, c](const Tensor<T>& g) {
                              return std::vector<Tensor<T>>{embed_channels(g, begin, c)};
                          });
}

namespace {

// Adjoint of slice_channels: places g at channel offset `begin` of a zero
// tensor with `total` channels.
template <class T>
Tensor<T> embed_channels(const Tensor<T>& g, std::int64_t begin, std::int64_t total) {
    const auto n = g.dim(0), count = g.dim(1), hw = g.dim(2) * g.dim(3);
    std::vector<T> out(static_cast<std::size_t>(n * total * hw), T(0));
    auto v = g.values();
    for (std::int64_t i = 0; i < n; ++i)
        std::copy_n(v.begin() + i * count * hw, count * hw, out.begin() + (i * total + begin) * hw);
    return make_result<T>("embed_channels", {n, total, g.dim(2), g.dim(3)}, std::move(out), {g},
                          [begin, count](const Tensor<T>& up) {
                              return std::vector<Tensor<T>>{slice_channels(up, begin, count)};
                          });
}

}  // namespace

#define METAHDR_INSTANTIATE_ELEMENTWISE(T)                                               \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> scale<T>(const Tensor<T>&, double);                               \
    template Tensor<T> add_scalar<T>(const Tensor<T>&, double);                          \
    template Tensor<T> pow_scalar<T>(const Tensor<T>&, double);                          \
    template Tensor<T> abs<T>(const Tensor<T>&);                                         \
    template Tensor<T> clamp_min<T>(const Tensor<T>&, double);                           \
    template Tensor<T> relu<T>(const Tensor<T>&);                                        \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                     \
    template Tensor<T> activation<T>(const Tensor<T>&, Activation);                      \
    template Tensor<T> sum<T>(const Tensor<T>&);                                         \
    template Tensor<T> mean<T>(const Tensor<T>&);                                        \
    template Tensor<T> broadcast_scalar<T>(const Tensor<T>&, const Shape&);              \
    template Tensor<T> channel_sum<T>(const Tensor<T>&);                                 \
    template Tensor<T> channel_broadcast<T>(const Tensor<T>&, const Shape&);             \
    template Tensor<T> pixel_sum<T>(const Tensor<T>&);                                   \
    template Tensor<T> pixel_broadcast<T>(const Tensor<T>&, std::int64_t);               \
    template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t, std::int64_t);

METAHDR_FOR_EACH_FLOAT(METAHDR_INSTANTIATE_ELEMENTWISE)

}  // namespace metahdr
