#include "metahdr/gradcheck.hpp"

#include "metahdr/autograd.hpp"
#include "metahdr/data.hpp"
#include "metahdr/loss.hpp"
#include "metahdr/meta.hpp"
#include "metahdr/ops.hpp"
#include "metahdr/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace metahdr {

using TD = Tensor<double>;

double relative_error(const TD& analytic, const TD& numeric, double floor) {
    auto a = analytic.values();
    auto n = numeric.values();
    if (a.size() != n.size()) throw DimensionError("relative_error: size mismatch");
    double diff = 0.0, an = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - n[i]));
        an = std::max(an, std::abs(a[i]));
        nn = std::max(nn, std::abs(n[i]));
    }
    return diff / std::max({an, nn, floor});
}

namespace {

std::vector<TD> as_leaves(std::span<const TD> xs) {
    std::vector<TD> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(x.requires_grad() ? x : x.leaf());
    return out;
}

}  // namespace

double gradient_error(const ScalarFn& f, std::span<const TD> inputs, double h) {
    std::vector<TD> analytic;
    {
        GradModeGuard recording(true);
        auto leaves = as_leaves(inputs);
        analytic = backward(f(leaves), std::span<const TD>(leaves)).values;
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        std::vector<TD> xs(inputs.begin(), inputs.end());
        auto numeric = fd_gradient<double>(
            [&](const TD& xj) {
                xs[j] = xj;
                return static_cast<double>(f(xs).item());
            },
            inputs[j], h);
        worst = std::max(worst, relative_error(analytic[j], numeric));
    }
    return worst;
}

PiecewiseCheck piecewise_gradient_error(const ScalarFn& f, std::span<const TD> inputs, double h, double tolerance) {
    std::vector<TD> analytic;
    {
        GradModeGuard recording(true);
        auto leaves = as_leaves(inputs);
        analytic = backward(f(leaves), std::span<const TD>(leaves)).values;
    }
    NoGradGuard no_grad;
    std::vector<TD> xs(inputs.begin(), inputs.end());
    const double f0 = f(xs).item();
    PiecewiseCheck out;
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        auto a = analytic[j].values();
        double scale = 1e-6;
        for (double v : a) scale = std::max(scale, std::abs(v));
        auto base = inputs[j].to_vector();
        auto eval = [&](std::size_t k, double dx) {
            auto v = base;
            v[k] += dx;
            xs[j] = TD(inputs[j].shape(), std::move(v));
            const double y = f(xs).item();
            xs[j] = inputs[j];
            return y;
        };
        std::vector<double> numeric(base.size());
        for (std::size_t k = 0; k < base.size(); ++k) {
            const double up = eval(k, h), down = eval(k, -h);
            numeric[k] = (up - down) / (2.0 * h);
            if (std::abs(numeric[k] - a[k]) <= tolerance * scale) continue;
            // Slopes of consecutive intervals agree on a smooth side and
            // disagree on a side containing a jump.
            const double up2 = eval(k, 2.0 * h), down2 = eval(k, -2.0 * h);
            const double right = std::abs((up - f0) - (up2 - up)) / h;
            const double left = std::abs((f0 - down) - (down - down2)) / h;
            if (std::min(left, right) * 10.0 >= std::max(left, right)) continue;
            ++out.one_sided;
            numeric[k] = right < left ? (-3.0 * f0 + 4.0 * up - up2) / (2.0 * h)
                                      : (3.0 * f0 - 4.0 * down + down2) / (2.0 * h);
        }
        out.max_error = std::max(out.max_error, relative_error(analytic[j], TD(inputs[j].shape(), std::move(numeric))));
    }
    return out;
}

ScalarFn directional_gradient(ScalarFn f, std::vector<TD> directions) {
    return [f = std::move(f), v = std::move(directions)](std::span<const TD> xs) {
        GradModeGuard recording(true);
        auto leaves = as_leaves(xs);
        auto grads = backward(f(leaves), std::span<const TD>(leaves), true).values;
        TD total;
        for (std::size_t j = 0; j < grads.size(); ++j) {
            auto term = sum(mul(v[j], grads[j]));
            total = total.defined() ? add(total, term) : term;
        }
        return total;
    };
}

bool GradcheckReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed(); });
}

std::vector<std::string> GradcheckReport::categories() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
        if (std::find(out.begin(), out.end(), c.category) == out.end()) out.push_back(c.category);
    return out;
}

namespace {

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    TD tensor(const Shape& shape, double lo = -1.0, double hi = 1.0) {
        std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : v) x = uniform(lo, hi);
        return TD(shape, std::move(v));
    }

    // |x| in [lo, hi] with random sign, keeping clear of kinks at `centre`.
    TD away_from(const Shape& shape, double centre, double lo, double hi) {
        std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& x : v) x = centre + (uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0) * uniform(lo, hi);
        return TD(shape, std::move(v));
    }

    // Distinct values spaced well beyond the finite-difference step.
    TD distinct(const Shape& shape) {
        std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
        std::iota(v.begin(), v.end(), 0.0);
        std::shuffle(v.begin(), v.end(), rng_);
        for (auto& x : v) x = 0.05 * x - 1.0;
        return TD(shape, std::move(v));
    }

private:
    std::mt19937_64 rng_;
};

struct Case {
    ScalarFn f;
    std::vector<TD> inputs;
};

// Weighted sum of an op's output so that every output element carries a
// different cotangent.
ScalarFn weighted(std::function<TD(std::span<const TD>)> op, TD weight) {
    return [op = std::move(op), w = std::move(weight)](std::span<const TD> xs) { return sum(mul(w, op(xs))); };
}

struct OpSpec {
    std::string name;
    std::function<Case(Sampler&)> make;
};

std::vector<OpSpec> op_specs() {
    std::vector<OpSpec> specs;
    auto binary = [&](std::string name, auto op, double blo, double bhi) {
        specs.push_back({std::move(name), [op, blo, bhi](Sampler& s) {
                             Shape sh{2, 3, 2, 2};
                             auto b = s.away_from(sh, 0.0, blo, bhi);
                             return Case{weighted([op](auto xs) { return op(xs[0], xs[1]); }, s.tensor(sh)),
                                         {s.tensor(sh), b}};
                         }});
    };
    binary("add", [](const TD& a, const TD& b) { return add(a, b); }, 0.0, 1.0);
    binary("sub", [](const TD& a, const TD& b) { return sub(a, b); }, 0.0, 1.0);
    binary("mul", [](const TD& a, const TD& b) { return mul(a, b); }, 0.0, 1.0);
    binary("div", [](const TD& a, const TD& b) { return div(a, b); }, 0.5, 2.0);

    auto unary = [&](std::string name, auto op, auto input) {
        specs.push_back({std::move(name), [op, input](Sampler& s) {
                             TD x = input(s);
                             Shape out_shape;
                             {
                                 NoGradGuard no_grad;
                                 out_shape = op(x).shape();
                             }
                             return Case{weighted([op](auto xs) { return op(xs[0]); }, s.tensor(out_shape)), {x}};
                         }});
    };
    const Shape sh{2, 2, 3, 2};
    auto signed_input = [sh](Sampler& s) { return s.tensor(sh, -2.0, 2.0); };
    auto positive_input = [sh](Sampler& s) { return s.tensor(sh, 0.5, 2.0); };
    unary("scale", [](const TD& x) { return scale(x, -1.7); }, signed_input);
    unary("add_scalar", [](const TD& x) { return add_scalar(x, 0.3); }, signed_input);
    for (double p : {2.0, 3.0, 0.5, -1.0, 1.5}) {
        char name[32];
        std::snprintf(name, sizeof name, "pow_scalar(%g)", p);
        unary(name, [p](const TD& x) { return pow_scalar(x, p); }, positive_input);
    }
    unary("abs", [](const TD& x) { return abs(x); }, [sh](Sampler& s) { return s.away_from(sh, 0.0, 0.1, 1.0); });
    unary("clamp_min", [](const TD& x) { return clamp_min(x, 0.2); },
          [sh](Sampler& s) { return s.away_from(sh, 0.2, 0.05, 1.0); });
    unary("relu", [](const TD& x) { return relu(x); }, [sh](Sampler& s) { return s.away_from(sh, 0.0, 0.05, 1.0); });
    unary("sigmoid", [](const TD& x) { return sigmoid(x); }, signed_input);
    unary("sum", [](const TD& x) { return sum(x); }, signed_input);
    unary("mean", [](const TD& x) { return mean(x); }, signed_input);
    unary("broadcast_scalar", [](const TD& x) { return broadcast_scalar(x, Shape{2, 3, 2, 2}); },
          [](Sampler& s) { return s.tensor({1}); });
    unary("channel_sum", [](const TD& x) { return channel_sum(x); }, signed_input);
    unary("channel_broadcast", [](const TD& x) { return channel_broadcast(x, Shape{2, 3, 2, 2}); },
          [](Sampler& s) { return s.tensor({3}); });
    unary("pixel_sum", [](const TD& x) { return pixel_sum(x); }, signed_input);
    unary("pixel_broadcast", [](const TD& x) { return pixel_broadcast(x, 3); },
          [](Sampler& s) { return s.tensor({2, 1, 3, 2}); });
    unary("slice_channels", [](const TD& x) { return slice_channels(x, 1, 2); },
          [](Sampler& s) { return s.tensor({2, 4, 2, 3}); });
    unary("maxpool2", [](const TD& x) { return maxpool2(x); }, [](Sampler& s) { return s.distinct({2, 2, 4, 6}); });

    specs.push_back({"concat_channels", [](Sampler& s) {
                         return Case{weighted([](auto xs) { return concat_channels(xs[0], xs[1]); },
                                              s.tensor({2, 5, 3, 2})),
                                     {s.tensor({2, 2, 3, 2}), s.tensor({2, 3, 3, 2})}};
                     }});
    specs.push_back({"conv2d(3x3)", [](Sampler& s) {
                         return Case{weighted([](auto xs) { return conv2d(xs[0], xs[1], xs[2], 1); },
                                              s.tensor({2, 4, 5, 4})),
                                     {s.tensor({2, 3, 5, 4}), s.tensor({4, 3, 3, 3}), s.tensor({4})}};
                     }});
    specs.push_back({"conv2d(1x1)", [](Sampler& s) {
                         return Case{weighted([](auto xs) { return conv2d(xs[0], xs[1], xs[2], 0); },
                                              s.tensor({2, 4, 3, 3})),
                                     {s.tensor({2, 3, 3, 3}), s.tensor({4, 3, 1, 1}), s.tensor({4})}};
                     }});
    specs.push_back({"conv_transpose2d", [](Sampler& s) {
                         return Case{weighted([](auto xs) { return conv_transpose2d(xs[0], xs[1], xs[2]); },
                                              s.tensor({2, 4, 6, 4})),
                                     {s.tensor({2, 3, 3, 2}), s.tensor({3, 4, 2, 2}), s.tensor({4})}};
                     }});
    specs.push_back({"batchnorm2d", [](Sampler& s) {
                         return Case{weighted([](auto xs) { return batchnorm2d(xs[0], xs[1], xs[2], 1e-5); },
                                              s.tensor({2, 3, 3, 4})),
                                     {s.tensor({2, 3, 3, 4}), s.tensor({3}, 0.5, 1.5), s.tensor({3})}};
                     }});
    specs.push_back({"expandnet_loss", [](Sampler& s) {
                         ScalarFn f = [](std::span<const TD> xs) { return expandnet_loss(xs[0], xs[1], LossConfig{}); };
                         // Keep |pred - target| clear of zero so the l1 kink is not crossed.
                         auto target = s.tensor({2, 3, 2, 2}, 0.05, 1.0);
                         auto offset = s.away_from({2, 3, 2, 2}, 0.0, 0.02, 0.3);
                         return Case{f, {add(target, offset), target}};
                     }});
    return specs;
}

std::vector<TD> random_directions(Sampler& s, std::span<const TD> like) {
    std::vector<TD> out;
    for (const auto& t : like) out.push_back(s.tensor(t.shape()));
    return out;
}

void emit(GradcheckReport& report, std::ostream* log, CheckResult result) {
    if (log) {
        char line[200];
        std::snprintf(line, sizeof line, "[%s] %-28s max_rel_err=%.3e tol=%.0e %s\n", result.category.c_str(),
                      result.name.c_str(), result.max_error, result.tolerance, result.passed() ? "PASS" : "FAIL");
        *log << line << std::flush;
    }
    report.checks.push_back(std::move(result));
}

UNetConfig tiny_config() {
    UNetConfig cfg;
    cfg.depth = 1;
    cfg.base_channels = 4;
    return cfg;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options, std::ostream* log) {
    GradcheckReport report;
    Sampler s(options.seed);

    for (const auto& spec : op_specs()) {
        double first = 0.0, second = 0.0;
        for (int trial = 0; trial < options.trials; ++trial) {
            auto c = spec.make(s);
            first = std::max(first, gradient_error(c.f, c.inputs, options.h));
            auto hvp = directional_gradient(c.f, random_directions(s, c.inputs));
            second = std::max(second, gradient_error(hvp, c.inputs, options.h));
        }
        emit(report, log, {"op", spec.name, first, options.op_tolerance});
        emit(report, log, {"op-second-order", spec.name, second, options.second_order_tolerance});
    }

    if (options.include_net) {
        const auto cfg = tiny_config();
        const auto params = init_params<double>(cfg, options.seed);
        const auto image = s.tensor({1, 3, 8, 8}, 0.0, 1.0);
        const auto target = s.tensor({1, 3, 8, 8}, 0.05, 1.0);
        ScalarFn mean_out = [&](std::span<const TD> ps) {
            return mean(forward(params.with_tensors({ps.begin(), ps.end()}), image));
        };
        ScalarFn loss = [&](std::span<const TD> ps) {
            return expandnet_loss(forward(params.with_tensors({ps.begin(), ps.end()}), image), target, LossConfig{});
        };
        ScalarFn wrt_image = [&](std::span<const TD> xs) { return mean(forward(params, xs[0])); };
        emit(report, log, {"unet", "mean(output) wrt params", gradient_error(mean_out, params.tensors(), options.h),
                           options.net_tolerance});
        emit(report, log, {"unet", "loss wrt params", gradient_error(loss, params.tensors(), options.h),
                           options.net_tolerance});
        const TD img[] = {image};
        emit(report, log, {"unet", "mean(output) wrt image", gradient_error(wrt_image, img, options.h),
                           options.net_tolerance});
    }

    if (options.include_meta) {
        const auto cfg = tiny_config();
        const auto theta = init_params<double>(cfg, options.seed + 1);
        const TrueHdrLabels labels;
        const auto task = make_task(synth_scene(options.seed, 8), Exposure::zero, labels);
        const LossConfig loss;
        AdaptConfig so{0.01, 3, MetaMode::second_order};
        ScalarFn objective = [&](std::span<const TD> ps) {
            return meta_objective(theta.with_tensors({ps.begin(), ps.end()}), task, so, loss);
        };
        const auto meta = piecewise_gradient_error(objective, theta.tensors(), options.meta_h, options.meta_tolerance);
        if (log) *log << "[meta] " << meta.one_sided << " element(s) straddle a jump; one-sided differences used\n";
        emit(report, log, {"meta", "second-order meta-gradient", meta.max_error, options.meta_tolerance});

        // With a zero inner rate both modes reduce to the plain query loss.
        double max_diff = 0.0;
        std::vector<std::vector<TD>> grads;
        for (auto mode : {MetaMode::second_order, MetaMode::first_order}) {
            AdaptConfig acfg{0.0, 3, mode};
            GradModeGuard recording(true);
            auto leaves = theta.leaves();
            auto obj = meta_objective(leaves, task, acfg, loss);
            grads.push_back(backward(obj, leaves.tensors()).values);
        }
        for (std::size_t j = 0; j < grads[0].size(); ++j) {
            auto a = grads[0][j].values();
            auto b = grads[1][j].values();
            for (std::size_t k = 0; k < a.size(); ++k) max_diff = std::max(max_diff, std::abs(a[k] - b[k]));
        }
        emit(report, log, {"meta", "fo/so agreement at zero rate", max_diff, 0.0});
    }
    return report;
}

}  // namespace metahdr
