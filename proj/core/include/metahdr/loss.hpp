#pragma once

#include "metahdr/tensor.hpp"

namespace metahdr {

struct LossConfig {
    /// Weight of the colour (cosine) term.
    double lambda = 5.0;
    /// Lower bound on the product of pixel-vector norms in the cosine term.
    double eps = 1e-8;

    void validate() const;
};

/// Mean absolute error over every pixel and channel plus
/// lambda * (1 - mean over pixel sites of cos(pred_rgb, target_rgb)).
///
/// Inputs are N x 3 x H x W; with N > 1 the result is the mean of the
/// per-image losses. Differentiable in both arguments to any order.
template <class T>
Tensor<T> expandnet_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg);

}  // namespace metahdr
