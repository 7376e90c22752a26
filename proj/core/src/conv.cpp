// Convolutions as contractions of a trilinear form.
//
// A convolution y = conv(x, w) defines T(x, w, y') = <conv(x, w), y'>. The
// forward pass and both gradients are the three ways of contracting T with
// two arguments to produce the third. Differentiating any of the three
// contractions yields another one of them, so the family is closed under
// differentiation and supports gradients of any order.

#include "op_support.hpp"

#include <Eigen/Core>

#include <array>
#include <memory>

namespace metahdr {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

template <class T>
class TrilinearForm {
public:
    virtual ~TrilinearForm() = default;
    virtual const char* op_name(int slot) const = 0;
    virtual Shape slot_shape(int slot) const = 0;
    /// Writes the contraction producing `slot` into `out`. `first` and
    /// `second` hold the two remaining slots in increasing slot order.
    virtual void contract(int slot, const T* first, const T* second, T* out) const = 0;
};

template <class T>
Tensor<T> contract(const std::shared_ptr<const TrilinearForm<T>>& form, int slot, const Tensor<T>& first,
                   const Tensor<T>& second);

template <class T>
Tensor<T> contract_unordered(const std::shared_ptr<const TrilinearForm<T>>& form, int slot, const Tensor<T>& a,
                             int slot_a, const Tensor<T>& b, int slot_b) {
    return slot_a < slot_b ? contract(form, slot, a, b) : contract(form, slot, b, a);
}

template <class T>
Tensor<T> contract(const std::shared_ptr<const TrilinearForm<T>>& form, int slot, const Tensor<T>& first,
                   const Tensor<T>& second) {
    std::array<int, 2> others{};
    for (int s = 0, k = 0; s < 3; ++s)
        if (s != slot) others[static_cast<std::size_t>(k++)] = s;
    detail::require_same_shape(form->op_name(slot), first.shape(), form->slot_shape(others[0]));
    detail::require_same_shape(form->op_name(slot), second.shape(), form->slot_shape(others[1]));

    Shape shape = form->slot_shape(slot);
    std::vector<T> out(static_cast<std::size_t>(shape_numel(shape)));
    form->contract(slot, first.values().data(), second.values().data(), out.data());

    const int i = others[0], j = others[1];
    return detail::make_result<T>(form->op_name(slot), std::move(shape), std::move(out), {first, second},
                                  [form, slot, i, j, first, second](const Tensor<T>& g) {
                                      return std::vector<Tensor<T>>{
                                          contract_unordered(form, i, second, j, g, slot),
                                          contract_unordered(form, j, first, i, g, slot)};
                                  });
}

// Slots: 0 = input [N,C,H,W], 1 = weight [F,C,k,k], 2 = output [N,F,Ho,Wo].
template <class T>
class ConvForm final : public TrilinearForm<T> {
public:
    ConvForm(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t f, int k, int pad)
        : n_(n), c_(c), h_(h), w_(w), f_(f), k_(k), pad_(pad), ho_(h + 2 * pad - k + 1), wo_(w + 2 * pad - k + 1) {}

    const char* op_name(int slot) const override {
        static constexpr const char* names[] = {"conv2d_grad_input", "conv2d_grad_weight", "conv2d"};
        return names[slot];
    }

    Shape slot_shape(int slot) const override {
        switch (slot) {
            case 0: return {n_, c_, h_, w_};
            case 1: return {f_, c_, k_, k_};
            default: return {n_, f_, ho_, wo_};
        }
    }

    void contract(int slot, const T* first, const T* second, T* out) const override {
        const std::int64_t ckk = c_ * k_ * k_, hw_in = h_ * w_, hw_out = ho_ * wo_;
        const bool pointwise = (k_ == 1 && pad_ == 0);
        std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(ckk * hw_out));

        if (slot == 2) {
            ConstMap<T> weight(second, f_, ckk);
            for (std::int64_t n = 0; n < n_; ++n) {
                const T* x = first + n * c_ * hw_in;
                const T* col = pointwise ? x : im2col(x, cols.data());
                MutMap<T> y(out + n * f_ * hw_out, f_, hw_out);
                y.noalias() = weight * ConstMap<T>(col, ckk, hw_out);
            }
        } else if (slot == 0) {
            ConstMap<T> weight(first, f_, ckk);
            for (std::int64_t n = 0; n < n_; ++n) {
                ConstMap<T> gy(second + n * f_ * hw_out, f_, hw_out);
                T* gx = out + n * c_ * hw_in;
                if (pointwise) {
                    MutMap<T>(gx, c_, hw_in).noalias() = weight.transpose() * gy;
                } else {
                    MutMap<T>(cols.data(), ckk, hw_out).noalias() = weight.transpose() * gy;
                    col2im(cols.data(), gx);
                }
            }
#ifdef METAHDR_FAULT_CONV_SIGN
            for (std::int64_t i = 0; i < n_ * c_ * hw_in; ++i) out[i] = -out[i];
#endif
        } else {
            MutMap<T> gw(out, f_, ckk);
            gw.setZero();
            for (std::int64_t n = 0; n < n_; ++n) {
                const T* x = first + n * c_ * hw_in;
                const T* col = pointwise ? x : im2col(x, cols.data());
                ConstMap<T> gy(second + n * f_ * hw_out, f_, hw_out);
                gw.noalias() += gy * ConstMap<T>(col, ckk, hw_out).transpose();
            }
        }
    }

private:
    // cols[(c*k + a)*k + b][i*Wo + j] = x[c][i + a - pad][j + b - pad] (0 outside).
    const T* im2col(const T* x, T* cols) const {
        for (std::int64_t c = 0; c < c_; ++c)
            for (int a = 0; a < k_; ++a)
                for (int b = 0; b < k_; ++b) {
                    T* row = cols + ((c * k_ + a) * k_ + b) * ho_ * wo_;
                    for (std::int64_t i = 0; i < ho_; ++i) {
                        const std::int64_t si = i + a - pad_;
                        T* dst = row + i * wo_;
                        if (si < 0 || si >= h_) {
                            std::fill_n(dst, wo_, T(0));
                            continue;
                        }
                        const T* src = x + (c * h_ + si) * w_;
                        for (std::int64_t j = 0; j < wo_; ++j) {
                            const std::int64_t sj = j + b - pad_;
                            dst[j] = (sj >= 0 && sj < w_) ? src[sj] : T(0);
                        }
                    }
                }
        return cols;
    }

    void col2im(const T* cols, T* x) const {
        std::fill_n(x, c_ * h_ * w_, T(0));
        for (std::int64_t c = 0; c < c_; ++c)
            for (int a = 0; a < k_; ++a)
                for (int b = 0; b < k_; ++b) {
                    const T* row = cols + ((c * k_ + a) * k_ + b) * ho_ * wo_;
                    for (std::int64_t i = 0; i < ho_; ++i) {
                        const std::int64_t si = i + a - pad_;
                        if (si < 0 || si >= h_) continue;
                        T* dst = x + (c * h_ + si) * w_;
                        const T* src = row + i * wo_;
                        for (std::int64_t j = 0; j < wo_; ++j) {
                            const std::int64_t sj = j + b - pad_;
                            if (sj >= 0 && sj < w_) dst[sj] += src[j];
                        }
                    }
                }
    }

    std::int64_t n_, c_, h_, w_, f_;
    int k_, pad_;
    std::int64_t ho_, wo_;
};

// Stride-2, 2x2 transposed convolution.
// Slots: 0 = input [N,C,H,W], 1 = weight [C,F,2,2], 2 = output [N,F,2H,2W].
template <class T>
class UpconvForm final : public TrilinearForm<T> {
public:
    UpconvForm(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t f)
        : n_(n), c_(c), h_(h), w_(w), f_(f) {}

    const char* op_name(int slot) const override {
        static constexpr const char* names[] = {"conv_transpose2d_grad_input", "conv_transpose2d_grad_weight",
                                                "conv_transpose2d"};
        return names[slot];
    }

    Shape slot_shape(int slot) const override {
        switch (slot) {
            case 0: return {n_, c_, h_, w_};
            case 1: return {c_, f_, 2, 2};
            default: return {n_, f_, 2 * h_, 2 * w_};
        }
    }

    void contract(int slot, const T* first, const T* second, T* out) const override {
        const std::int64_t f4 = f_ * 4, hw = h_ * w_;
        std::vector<T> z(static_cast<std::size_t>(f4 * hw));
        MutMap<T> zmat(z.data(), f4, hw);
        if (slot == 2) {
            ConstMap<T> weight(second, c_, f4);
            for (std::int64_t n = 0; n < n_; ++n) {
                zmat.noalias() = weight.transpose() * ConstMap<T>(first + n * c_ * hw, c_, hw);
                scatter(z.data(), out + n * f_ * 4 * hw);
            }
        } else if (slot == 0) {
            ConstMap<T> weight(first, c_, f4);
            for (std::int64_t n = 0; n < n_; ++n) {
                gather(second + n * f_ * 4 * hw, z.data());
                MutMap<T>(out + n * c_ * hw, c_, hw).noalias() = weight * zmat;
            }
        } else {
            MutMap<T> gw(out, c_, f4);
            gw.setZero();
            for (std::int64_t n = 0; n < n_; ++n) {
                gather(second + n * f_ * 4 * hw, z.data());
                gw.noalias() += ConstMap<T>(first + n * c_ * hw, c_, hw) * zmat.transpose();
            }
        }
    }

private:
    // z[(f*2 + a)*2 + b][i*W + j] <-> y[f][2i + a][2j + b]
    void scatter(const T* z, T* y) const {
        const std::int64_t w2 = 2 * w_;
        for (std::int64_t f = 0; f < f_; ++f)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    const T* row = z + ((f * 2 + a) * 2 + b) * h_ * w_;
                    for (std::int64_t i = 0; i < h_; ++i) {
                        T* dst = y + (f * 2 * h_ + 2 * i + a) * w2 + b;
                        for (std::int64_t j = 0; j < w_; ++j) dst[2 * j] = row[i * w_ + j];
                    }
                }
    }

    void gather(const T* y, T* z) const {
        const std::int64_t w2 = 2 * w_;
        for (std::int64_t f = 0; f < f_; ++f)
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    T* row = z + ((f * 2 + a) * 2 + b) * h_ * w_;
                    for (std::int64_t i = 0; i < h_; ++i) {
                        const T* src = y + (f * 2 * h_ + 2 * i + a) * w2 + b;
                        for (std::int64_t j = 0; j < w_; ++j) row[i * w_ + j] = src[2 * j];
                    }
                }
    }

    std::int64_t n_, c_, h_, w_, f_;
};

void require_bias(const char* op, const Shape& bias, std::int64_t filters) {
    if (bias.size() != 1 || bias[0] != filters) {
        throw DimensionError(std::string(op) + ": bias must have shape (" + std::to_string(filters) + "), got " +
                             shape_string(bias));
    }
}

}  // namespace

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, int padding) {
    detail::require_rank4("conv2d", "input", input.shape());
    detail::require_rank4("conv2d", "weight", weight.shape());
    const auto k = weight.dim(2);
    if (weight.dim(3) != k || !((k == 3 && padding == 1) || (k == 1 && padding == 0))) {
        throw DimensionError("conv2d: supported geometries are 3x3/padding 1 and 1x1/padding 0; got kernel " +
                             std::to_string(weight.dim(2)) + "x" + std::to_string(weight.dim(3)) +
                             " with padding " + std::to_string(padding));
    }
    if (weight.dim(1) != input.dim(1)) {
        throw DimensionError("conv2d: weight axis 1 (in-channels, " + std::to_string(weight.dim(1)) +
                             ") does not match input axis C (" + std::to_string(input.dim(1)) + ")");
    }
    require_bias("conv2d", bias.shape(), weight.dim(0));
    auto form = std::make_shared<const ConvForm<T>>(input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                                                    weight.dim(0), static_cast<int>(k), padding);
    auto y = contract<T>(form, 2, input, weight);
    return add(y, channel_broadcast(bias, y.shape()));
}

template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    detail::require_rank4("conv_transpose2d", "input", input.shape());
    detail::require_rank4("conv_transpose2d", "weight", weight.shape());
    if (weight.dim(2) != 2 || weight.dim(3) != 2) {
        throw DimensionError("conv_transpose2d: weight must be C x F x 2 x 2, got " + shape_string(weight.shape()));
    }
    if (weight.dim(0) != input.dim(1)) {
        throw DimensionError("conv_transpose2d: weight axis 0 (in-channels, " + std::to_string(weight.dim(0)) +
                             ") does not match input axis C (" + std::to_string(input.dim(1)) + ")");
    }
    require_bias("conv_transpose2d", bias.shape(), weight.dim(1));
    auto form = std::make_shared<const UpconvForm<T>>(input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                                                      weight.dim(1));
    auto y = contract<T>(form, 2, input, weight);
    return add(y, channel_broadcast(bias, y.shape()));
}

#define METAHDR_INSTANTIATE_CONV(T)                                                                   \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);          \
    template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

METAHDR_FOR_EACH_FLOAT(METAHDR_INSTANTIATE_CONV)

}  // namespace metahdr
