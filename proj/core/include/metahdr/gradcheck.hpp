#pragma once

// 64-bit finite-difference verification of the differentiation engine.

#include "metahdr/tensor.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace metahdr {

/// ||a - n||_inf / max(||a||_inf, ||n||_inf, floor). The floor keeps
/// gradients that vanish analytically (e.g. a bias feeding batch norm) from
/// turning rounding noise into a large ratio.
double relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric, double floor = 1e-6);

using ScalarFn = std::function<Tensor<double>(std::span<const Tensor<double>>)>;

/// Largest relative_error over all inputs between backward() and
/// fd_gradient() for a scalar-valued `f`.
double gradient_error(const ScalarFn& f, std::span<const Tensor<double>> inputs, double h);

struct PiecewiseCheck {
    double max_error = 0.0;
    /// Elements whose central stencil straddled a jump of f.
    std::size_t one_sided = 0;
};

/// gradient_error for functions that are only piecewise smooth, such as an
/// objective evaluated after gradient steps through relu or max-pool
/// networks (the inner gradient jumps when a unit changes state). Where the
/// central difference misses the analytic value by more than `tolerance`
/// and exactly one side of the stencil shows a jump, a second-order
/// one-sided difference from the smooth side replaces it. The side is chosen
/// from function values only.
PiecewiseCheck piecewise_gradient_error(const ScalarFn& f, std::span<const Tensor<double>> inputs, double h,
                                        double tolerance);

/// Scalar h(x) = sum_j <v_j, grad_j f(x)>, built with create_graph so its own
/// gradient is a Hessian-vector product of f.
ScalarFn directional_gradient(ScalarFn f, std::vector<Tensor<double>> directions);

struct GradcheckOptions {
    int trials = 20;
    std::uint64_t seed = 1;
    double h = 1e-4;
    /// Step for the meta-gradient check. Its objective jumps wherever an
    /// inner-loop gradient changes branch, so a short stencil is used.
    double meta_h = 1e-5;
    double op_tolerance = 1e-5;
    double second_order_tolerance = 1e-4;
    double net_tolerance = 1e-4;
    double meta_tolerance = 1e-3;
    bool include_net = true;
    bool include_meta = true;
};

struct CheckResult {
    std::string category;
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool passed() const { return max_error <= tolerance; }
};

struct GradcheckReport {
    std::vector<CheckResult> checks;

    bool passed() const;
    std::vector<std::string> categories() const;
};

/// Categories: "op" (first order, every differentiable operation),
/// "op-second-order", "unet" (depth 1, base 4, 8x8) and "meta"
/// (second-order meta-gradient, 3 inner steps). Each check line is written
/// to `log` as it completes when `log` is non-null.
GradcheckReport run_gradcheck(const GradcheckOptions& options, std::ostream* log = nullptr);

}  // namespace metahdr
