#include "metahdr/loss.hpp"

#include "metahdr/ops.hpp"
#include "op_support.hpp"

namespace metahdr {

void LossConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("loss lambda must be >= 0");
    if (!(eps > 0.0)) throw ConfigError("loss eps must be > 0");
}

template <class T>
Tensor<T> expandnet_loss(const Tensor<T>& pred, const Tensor<T>& target, const LossConfig& cfg) {
    detail::require_rank4("expandnet_loss", "prediction", pred.shape());
    detail::require_same_shape("expandnet_loss", pred.shape(), target.shape());
    if (pred.dim(1) != 3) {
        throw DimensionError("expandnet_loss: expected 3 colour channels, got " + shape_string(pred.shape()));
    }
    auto l1 = mean(abs(sub(pred, target)));

    // cos = <p, t> / sqrt(max(|p|^2 |t|^2, eps^2)) per pixel site.
    auto dot = pixel_sum(mul(pred, target));
    auto norms = mul(pixel_sum(mul(pred, pred)), pixel_sum(mul(target, target)));
    auto denom = pow_scalar(clamp_min(norms, cfg.eps * cfg.eps), 0.5);
    auto cosine = mean(div(dot, denom));
    return add(l1, scale(add_scalar(scale(cosine, -1.0), 1.0), cfg.lambda));
}

template Tensor<float> expandnet_loss<float>(const Tensor<float>&, const Tensor<float>&, const LossConfig&);
template Tensor<double> expandnet_loss<double>(const Tensor<double>&, const Tensor<double>&, const LossConfig&);

}  // namespace metahdr
