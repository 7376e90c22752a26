#include "metahdr/meta.hpp"

#include "metahdr/autograd.hpp"
#include "metahdr/errors.hpp"
#include "metahdr/ops.hpp"
#include "metahdr/png_io.hpp"
#include "metahdr/rgbe.hpp"
#include "op_support.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <thread>

namespace metahdr {

std::string_view mode_name(MetaMode mode) { return mode == MetaMode::second_order ? "so" : "fo"; }

std::optional<MetaMode> parse_mode(std::string_view text) {
    if (text == "so" || text == "second_order") return MetaMode::second_order;
    if (text == "fo" || text == "first_order") return MetaMode::first_order;
    return std::nullopt;
}

void AdaptConfig::validate() const {
    if (!(inner_lr >= 0.0) || !std::isfinite(inner_lr)) throw ConfigError("inner learning rate must be >= 0");
    if (steps < 0) throw ConfigError("adaptation steps must be >= 0");
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

std::optional<OptimizerKind> parse_optimizer(std::string_view text) {
    if (text == "adam") return OptimizerKind::adam;
    if (text == "sgd") return OptimizerKind::sgd;
    return std::nullopt;
}

void MetaConfig::validate() const {
    if (!(outer_lr >= 0.0) || !std::isfinite(outer_lr)) throw ConfigError("outer learning rate must be >= 0");
    if (meta_batch < 1) throw ConfigError("meta batch must be >= 1");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (val_every < 0) throw ConfigError("val_every must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.eps > 0.0)) {
        throw ConfigError("adam needs beta1, beta2 in [0, 1) and eps > 0");
    }
    loss.validate();
}

std::string_view scheme_name(LabelScheme scheme) {
    switch (scheme) {
        case LabelScheme::true_hdr: return "true_hdr";
        case LabelScheme::file_pseudo: return "file_pseudo";
        default: return "identity";
    }
}

std::optional<LabelScheme> parse_scheme(std::string_view text) {
    if (text == "true_hdr") return LabelScheme::true_hdr;
    if (text == "file_pseudo") return LabelScheme::file_pseudo;
    if (text == "identity") return LabelScheme::identity;
    return std::nullopt;
}

Image TrueHdrLabels::label(const SceneRecord& scene, Exposure) const { return scene.hdr_normalized; }

Image IdentityLabels::label(const SceneRecord& scene, Exposure ev) const { return scene.ldr_at(ev); }

FilePseudoLabels::FilePseudoLabels(std::filesystem::path dir, Preprocess pre) : dir_(std::move(dir)), pre_(pre) {}

Image FilePseudoLabels::label(const SceneRecord& scene, Exposure ev) const {
    const std::string key = scene.scene_id + "/" + std::string(ev_tag(ev));
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const auto base = dir_ / scene.scene_id / std::string(ev_tag(ev));
    auto hdr_path = base;
    hdr_path += ".hdr";
    auto png_path = base;
    png_path += ".png";
    Image img;
    try {
        if (std::filesystem::exists(hdr_path)) {
            img = normalize_hdr(preprocess_image(read_rgbe_file(hdr_path), pre_)).image;
        } else if (std::filesystem::exists(png_path)) {
            img = preprocess_image(read_png(png_path), pre_);
        } else {
            throw LabelError("no pseudo-label for scene " + scene.scene_id + ": neither " + hdr_path.string() +
                             " nor " + png_path.string() + " exists");
        }
    } catch (const LabelError&) {
        throw;
    } catch (const Error& e) {
        throw LabelError("pseudo-label for scene " + scene.scene_id + " (" + std::string(ev_tag(ev)) +
                         ") unreadable: " + e.what());
    }
    const auto& ldr = scene.ldr_at(ev);
    if (!img.same_dims(ldr)) {
        throw LabelError("pseudo-label " + key + " is " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + ", scene is " + std::to_string(ldr.width) + "x" +
                         std::to_string(ldr.height));
    }
    std::lock_guard lock(mutex_);
    cache_.emplace(key, img);
    return img;
}

std::unique_ptr<LabelProvider> make_label_provider(LabelScheme scheme, const std::filesystem::path& dir,
                                                   const Preprocess& pre) {
    switch (scheme) {
        case LabelScheme::true_hdr: return std::make_unique<TrueHdrLabels>();
        case LabelScheme::identity: return std::make_unique<IdentityLabels>();
        default:
            if (dir.empty()) throw ConfigError("file_pseudo labels need a labels directory");
            if (!std::filesystem::is_directory(dir)) {
                throw ConfigError("labels directory does not exist: " + dir.string());
            }
            return std::make_unique<FilePseudoLabels>(dir, pre);
    }
}

namespace {

bool in_unit_range(const Image& img) {
    for (float v : img.data)
        if (!(v >= 0.0f && v <= 1.0f)) return false;
    return true;
}

}  // namespace

void Task::validate() const {
    auto fail = [this](const std::string& why) { throw ContractError("task " + scene_id + ": " + why); };
    if (support.empty()) fail("empty support set");
    std::vector<Exposure> seen{query.ev};
    for (const auto& ex : support) {
        if (std::find(seen.begin(), seen.end(), ex.ev) != seen.end()) fail("exposures must be distinct");
        seen.push_back(ex.ev);
    }
    auto check = [&](const Example& ex, const char* role) {
        if (ex.ldr.channels != 3 || !ex.ldr.same_dims(query.ldr) || !ex.label.same_dims(query.ldr)) {
            fail(std::string(role) + " images differ in size");
        }
        if (!in_unit_range(ex.ldr) || !in_unit_range(ex.label)) fail(std::string(role) + " values outside [0, 1]");
    };
    check(query, "query");
    for (const auto& ex : support) check(ex, "support");
}

Task make_task(const SceneRecord& scene, Exposure holdout, const LabelProvider& labels) {
    Task task;
    task.scene_id = scene.scene_id;
    task.label_scheme = labels.scheme();
    task.query = {holdout, scene.ldr_at(holdout), scene.hdr_normalized};
    for (auto ev : kExposures)
        if (ev != holdout) task.support.push_back({ev, scene.ldr_at(ev), labels.label(scene, ev)});
    return task;
}

template <class T>
std::vector<Tensor<T>> adapt_params(std::span<const Tensor<T>> theta, const ParamLoss<T>& support_loss,
                                    const AdaptConfig& cfg) {
    cfg.validate();
    std::vector<Tensor<T>> phi;
    phi.reserve(theta.size());
    for (const auto& t : theta) phi.push_back(t.requires_grad() ? t : t.leaf());
    if (cfg.inner_lr == 0.0 || cfg.steps == 0 || phi.empty()) return {theta.begin(), theta.end()};

    GradModeGuard recording(true);
    const bool create_graph = cfg.mode == MetaMode::second_order;
    for (int step = 0; step < cfg.steps; ++step) {
        try {
            const auto loss = support_loss(phi);
            auto grads = backward(loss, std::span<const Tensor<T>>(phi), create_graph);
            for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = sub(phi[i], scale(grads.values[i], cfg.inner_lr));
        } catch (const NumericError& e) {
            throw AdaptationError(e.what(), step);
        }
    }
    return phi;
}

template <class T>
OuterOptimizer<T>::OuterOptimizer(OptimizerKind kind, double lr, AdamParams adam)
    : kind_(kind), lr_(lr), adam_(adam) {
    if (!(lr >= 0.0)) throw ConfigError("outer learning rate must be >= 0");
}

template <class T>
std::vector<Tensor<T>> OuterOptimizer<T>::step(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("optimizer step: " + std::to_string(grads.size()) + " gradients for " +
                             std::to_string(params.size()) + " parameters");
    }
    if (kind_ == OptimizerKind::adam && m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
            v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(t_));
    std::vector<Tensor<T>> out;
    out.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        detail::require_same_shape("optimizer step", params[i].shape(), grads[i].shape());
        auto p = params[i].values();
        auto g = grads[i].values();
        std::vector<T> next(p.size());
        if (kind_ == OptimizerKind::sgd) {
            for (std::size_t k = 0; k < p.size(); ++k) next[k] = static_cast<T>(p[k] - lr_ * g[k]);
        } else {
            if (m_[i].size() != p.size()) throw DimensionError("optimizer step: parameter shapes changed");
            for (std::size_t k = 0; k < p.size(); ++k) {
                const double gk = g[k];
                m_[i][k] = adam_.beta1 * m_[i][k] + (1.0 - adam_.beta1) * gk;
                v_[i][k] = adam_.beta2 * v_[i][k] + (1.0 - adam_.beta2) * gk * gk;
                const double update = (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + adam_.eps);
                next[k] = static_cast<T>(p[k] - lr_ * update);
            }
        }
        out.emplace_back(params[i].shape(), std::move(next));
    }
    return out;
}

template <class T>
ParamSet<T> OuterOptimizer<T>::step(const ParamSet<T>& params, std::span<const Tensor<T>> grads) {
    return params.with_tensors(step(params.tensors(), grads));
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
// exception (by index) is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const auto workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
    run();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

template <class T>
MetaGradient<T> mean_meta_gradient(std::span<const Tensor<T>> theta, std::span<const ParamLoss<T>> objectives,
                                   std::span<const std::string> task_labels, int threads) {
    if (objectives.empty()) throw ContractError("meta gradient needs at least one task");
    std::vector<Tensor<T>> leaves;
    leaves.reserve(theta.size());
    for (const auto& t : theta) leaves.push_back(t.leaf());

    const auto n = objectives.size();
    std::vector<std::vector<Tensor<T>>> task_grads(n);
    std::vector<double> losses(n, 0.0);
    std::vector<std::string> failures(n);
    parallel_for(n, threads, [&](std::size_t i) {
        try {
            GradModeGuard recording(true);
            const auto obj = objectives[i](leaves);
            losses[i] = static_cast<double>(obj.item());
            task_grads[i] = backward(obj, std::span<const Tensor<T>>(leaves)).values;
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });

    std::string failed;
    for (std::size_t i = 0; i < n; ++i) {
        if (failures[i].empty()) continue;
        const std::string label = i < task_labels.size() ? task_labels[i] : "task " + std::to_string(i);
        failed += (failed.empty() ? "" : "; ") + label + ": " + failures[i];
    }
    if (!failed.empty()) throw TrainingError("non-finite meta-objective: " + failed);

    MetaGradient<T> out;
    for (double l : losses) out.mean_loss += l;
    out.mean_loss /= static_cast<double>(n);
    for (std::size_t j = 0; j < leaves.size(); ++j) {
        std::vector<double> acc(static_cast<std::size_t>(leaves[j].numel()), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto g = task_grads[i][j].values();
            for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
        std::vector<T> mean(acc.size());
        for (std::size_t k = 0; k < acc.size(); ++k) mean[k] = static_cast<T>(acc[k] / static_cast<double>(n));
        out.grads.emplace_back(leaves[j].shape(), std::move(mean));
    }
    return out;
}

template <class T>
Tensor<T> support_loss(const ParamSet<T>& params, const Task& task, const LossConfig& loss) {
    if (task.support.empty()) throw ContractError("task " + task.scene_id + ": empty support set");
    Tensor<T> total;
    for (const auto& ex : task.support) {
        auto l = expandnet_loss(forward(params, to_tensor<T>(ex.ldr)), to_tensor<T>(ex.label), loss);
        total = total.defined() ? add(total, l) : l;
    }
    return task.support.size() == 1 ? total : scale(total, 1.0 / static_cast<double>(task.support.size()));
}

template <class T>
Tensor<T> query_loss(const ParamSet<T>& params, const Task& task, const LossConfig& loss) {
    return expandnet_loss(forward(params, to_tensor<T>(task.query.ldr)), to_tensor<T>(task.query.label), loss);
}

template <class T>
ParamSet<T> adapt(const ParamSet<T>& theta, const Task& task, const AdaptConfig& cfg, const LossConfig& loss) {
    ParamLoss<T> inner = [&](std::span<const Tensor<T>> phi) {
        return support_loss(theta.with_tensors({phi.begin(), phi.end()}), task, loss);
    };
    return theta.with_tensors(adapt_params(theta.tensors(), inner, cfg));
}

template <class T>
Tensor<T> meta_objective(const ParamSet<T>& theta, const Task& task, const AdaptConfig& acfg,
                         const LossConfig& loss) {
    return query_loss(adapt(theta, task, acfg, loss), task, loss);
}

template <class T>
MetaStepResult<T> meta_step(const ParamSet<T>& theta, std::span<const Task> batch, const MetaConfig& mcfg,
                            const AdaptConfig& acfg, OuterOptimizer<T>& optimizer) {
    if (static_cast<int>(batch.size()) != mcfg.meta_batch) {
        throw ContractError("meta_step: batch has " + std::to_string(batch.size()) + " tasks, meta_batch is " +
                            std::to_string(mcfg.meta_batch));
    }
    std::vector<ParamLoss<T>> objectives;
    std::vector<std::string> labels;
    for (const auto& task : batch) {
        objectives.push_back([&theta, &task, &acfg, &mcfg](std::span<const Tensor<T>> th) {
            return meta_objective(theta.with_tensors({th.begin(), th.end()}), task, acfg, mcfg.loss);
        });
        labels.push_back(task.scene_id + "@" + std::string(ev_tag(task.query.ev)));
    }
    auto mg = mean_meta_gradient<T>(theta.tensors(), objectives, labels, mcfg.threads);
    return {optimizer.step(theta, mg.grads), mg.mean_loss};
}

template <class T>
Image predict(const ParamSet<T>& params, const Image& ldr) {
    NoGradGuard no_grad;
    return to_image(forward(params, to_tensor<T>(ldr)));
}

std::string_view eval_mode_name(EvalMode mode) { return row_name(report_row(mode)); }

std::optional<EvalMode> parse_eval_mode(std::string_view text) {
    if (text == "single_shot") return EvalMode::single_shot;
    if (text == "adapt_true_hdr") return EvalMode::adapt_true_hdr;
    if (text == "adapt_pseudo") return EvalMode::adapt_pseudo;
    return std::nullopt;
}

ReportRow report_row(EvalMode mode) {
    switch (mode) {
        case EvalMode::single_shot: return ReportRow::single_shot;
        case EvalMode::adapt_true_hdr: return ReportRow::adapt_true_hdr;
        default: return ReportRow::adapt_pseudo;
    }
}

template <class T>
MetricReport evaluate(const ParamSet<T>& theta, std::span<const SceneRecord> scenes, const EvalOptions& options) {
    options.adapt.validate();
    options.loss.validate();
    for (auto mode : options.modes) {
        if (mode == EvalMode::adapt_pseudo && !options.pseudo_labels) {
            throw ConfigError("adapt_pseudo evaluation needs a pseudo-label provider");
        }
    }
    // Adapted parameters are only scored, never differentiated further.
    AdaptConfig acfg = options.adapt;
    acfg.mode = MetaMode::first_order;
    const auto base = theta.detach();
    const TrueHdrLabels true_labels;
    std::mutex sink_mutex;

    std::vector<MetricReport> per_scene(scenes.size());
    parallel_for(scenes.size(), options.threads, [&](std::size_t s) {
        const auto& scene = scenes[s];
        auto& report = per_scene[s];
        auto score = [&](Exposure ev, ReportRow row, const Image& pred) {
            report.add({scene.scene_id, ev_value(ev), row, ssim(pred, scene.hdr_normalized),
                        psnr(pred, scene.hdr_normalized)});
            if (options.sink) {
                std::lock_guard lock(sink_mutex);
                options.sink(scene, ev, row, pred);
            }
        };
        for (auto mode : options.modes) {
            const auto row = report_row(mode);
            for (auto ev : kExposures) {
                if (mode == EvalMode::single_shot) {
                    score(ev, row, predict(base, scene.ldr_at(ev)));
                    continue;
                }
                const LabelProvider& labels =
                    mode == EvalMode::adapt_true_hdr ? static_cast<const LabelProvider&>(true_labels)
                                                     : *options.pseudo_labels;
                Task task;
                try {
                    task = make_task(scene, ev, labels);
                } catch (const LabelError& e) {
                    report.skip({scene.scene_id, row, e.what()});
                    break;
                }
                const auto phi = adapt(base, task, acfg, options.loss).detach();
                score(ev, row, predict(phi, task.query.ldr));
            }
        }
        if (options.baseline) {
            for (auto ev : kExposures) score(ev, ReportRow::ldr_no_recon, scene.ldr_at(ev));
        }
    });

    MetricReport out;
    for (const auto& r : per_scene) out.merge(r);
    return out;
}

template <class T>
double validation_ssim(const ParamSet<T>& theta, std::span<const SceneRecord> scenes, const AdaptConfig& acfg,
                       const LossConfig& loss, const LabelProvider& labels, int threads) {
    EvalOptions opt;
    opt.adapt = acfg;
    opt.loss = loss;
    opt.baseline = false;
    opt.threads = threads;
    const bool truth = labels.scheme() == LabelScheme::true_hdr;
    opt.modes = {truth ? EvalMode::adapt_true_hdr : EvalMode::adapt_pseudo};
    opt.pseudo_labels = truth ? nullptr : &labels;
    const auto report = evaluate(theta, scenes, opt);
    const auto summary = report.summary(report_row(opt.modes[0]));
    if (!summary || summary->count == 0) throw TrainingError("no validation scene could be scored");
    return summary->mean_ssim;
}

template <class T>
TrainResult<T> train(const ParamSet<T>& init, std::span<const SceneRecord> train_scenes,
                     std::span<const SceneRecord> val_scenes, const MetaConfig& mcfg, const AdaptConfig& acfg,
                     const LabelProvider& labels, const IterationCallback& on_iteration) {
    mcfg.validate();
    acfg.validate();
    if (train_scenes.empty()) throw ConfigError("meta-train split is empty");
    if (val_scenes.empty()) throw ConfigError("meta-validation split is empty");
    for (const auto& a : train_scenes)
        for (const auto& b : val_scenes)
            if (a.scene_id == b.scene_id) throw ConfigError("scene " + a.scene_id + " is in both train and val");

    TrainResult<T> result;
    std::vector<const SceneRecord*> usable;
    for (const auto& scene : train_scenes) {
        try {
            for (auto ev : kExposures) labels.label(scene, ev);
            usable.push_back(&scene);
        } catch (const LabelError& e) {
            result.skipped.emplace_back(scene.scene_id, e.what());
        }
    }
    if (usable.empty()) throw ConfigError("no meta-train scene has usable labels");

    auto theta = init.detach();
    result.params = theta;
    result.best_params = theta;
    const bool validating = mcfg.val_every > 0;
    if (validating) {
        result.best_val_ssim = validation_ssim(theta, val_scenes, acfg, mcfg.loss, labels, mcfg.threads);
    }

    std::mt19937_64 rng(mcfg.seed);
    std::uniform_int_distribution<std::size_t> pick_scene(0, usable.size() - 1);
    std::uniform_int_distribution<int> pick_ev(0, 2);
    OuterOptimizer<T> optimizer(mcfg.optimizer, mcfg.outer_lr, mcfg.adam);
    std::vector<Task> batch(static_cast<std::size_t>(mcfg.meta_batch));
    for (int it = 1; it <= mcfg.iterations; ++it) {
        for (auto& task : batch) {
            const auto& scene = *usable[pick_scene(rng)];
            task = make_task(scene, kExposures[static_cast<std::size_t>(pick_ev(rng))], labels);
        }
        auto step = meta_step(theta, std::span<const Task>(batch), mcfg, acfg, optimizer);
        theta = std::move(step.params);

        IterationRecord rec{it, step.mean_loss, std::nullopt};
        if (validating && (it % mcfg.val_every == 0 || it == mcfg.iterations)) {
            rec.val_ssim = validation_ssim(theta, val_scenes, acfg, mcfg.loss, labels, mcfg.threads);
            if (*rec.val_ssim > *result.best_val_ssim) {
                result.best_val_ssim = rec.val_ssim;
                result.best_params = theta;
                result.best_iteration = it;
            }
        }
        result.history.push_back(rec);
        if (on_iteration) on_iteration(rec);
    }
    result.params = theta;
    if (!validating) {
        result.best_params = theta;
        result.best_iteration = mcfg.iterations;
    }
    return result;
}

void write_history_csv(std::ostream& os, std::span<const IterationRecord> history) {
    os << "iteration,meta_loss,val_ssim\n";
    char buf[96];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,", rec.iteration, rec.meta_loss);
        os << buf;
        if (rec.val_ssim) {
            std::snprintf(buf, sizeof buf, "%.6f", *rec.val_ssim);
            os << buf;
        }
        os << '\n';
    }
}

#define METAHDR_INSTANTIATE_META(T)                                                                          \
    template std::vector<Tensor<T>> adapt_params<T>(std::span<const Tensor<T>>, const ParamLoss<T>&,         \
                                                    const AdaptConfig&);                                     \
    template class OuterOptimizer<T>;                                                                        \
    template MetaGradient<T> mean_meta_gradient<T>(std::span<const Tensor<T>>, std::span<const ParamLoss<T>>, \
                                                   std::span<const std::string>, int);                       \
    template Tensor<T> support_loss<T>(const ParamSet<T>&, const Task&, const LossConfig&);                  \
    template Tensor<T> query_loss<T>(const ParamSet<T>&, const Task&, const LossConfig&);                    \
    template ParamSet<T> adapt<T>(const ParamSet<T>&, const Task&, const AdaptConfig&, const LossConfig&);   \
    template Tensor<T> meta_objective<T>(const ParamSet<T>&, const Task&, const AdaptConfig&,                \
                                         const LossConfig&);                                                 \
    template MetaStepResult<T> meta_step<T>(const ParamSet<T>&, std::span<const Task>, const MetaConfig&,    \
                                            const AdaptConfig&, OuterOptimizer<T>&);                         \
    template Image predict<T>(const ParamSet<T>&, const Image&);                                             \
    template MetricReport evaluate<T>(const ParamSet<T>&, std::span<const SceneRecord>, const EvalOptions&); \
    template double validation_ssim<T>(const ParamSet<T>&, std::span<const SceneRecord>, const AdaptConfig&, \
                                       const LossConfig&, const LabelProvider&, int);                        \
    template TrainResult<T> train<T>(const ParamSet<T>&, std::span<const SceneRecord>,                       \
                                     std::span<const SceneRecord>, const MetaConfig&, const AdaptConfig&,    \
                                     const LabelProvider&, const IterationCallback&);

METAHDR_FOR_EACH_FLOAT(METAHDR_INSTANTIATE_META)

}  // namespace metahdr
