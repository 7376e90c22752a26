#pragma once

// Episodic meta-learning over per-scene tasks: inner-loop adaptation,
// meta-objective, outer update, training driver and evaluation protocol.

#include "metahdr/data.hpp"
#include "metahdr/image.hpp"
#include "metahdr/loss.hpp"
#include "metahdr/metrics.hpp"
#include "metahdr/unet.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace metahdr {

enum class MetaMode { second_order, first_order };

std::string_view mode_name(MetaMode mode);  // "so" / "fo"
std::optional<MetaMode> parse_mode(std::string_view text);

struct AdaptConfig {
    double inner_lr = 0.01;
    int steps = 3;
    MetaMode mode = MetaMode::second_order;

    void validate() const;
};

enum class OptimizerKind { adam, sgd };

std::string_view optimizer_name(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer(std::string_view text);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct MetaConfig {
    double outer_lr = 0.005;
    int meta_batch = 5;
    int iterations = 200;
    std::uint64_t seed = 0;
    LossConfig loss;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamParams adam;
    /// Validation every this many iterations (and after the last one); 0 disables.
    int val_every = 10;
    /// Worker threads for per-task objectives. Results do not depend on it.
    int threads = 1;

    void validate() const;
};

enum class LabelScheme { true_hdr, file_pseudo, identity };

std::string_view scheme_name(LabelScheme scheme);
std::optional<LabelScheme> parse_scheme(std::string_view text);

/// Supplies the regression targets used for support images during adaptation.
class LabelProvider {
public:
    virtual ~LabelProvider() = default;
    virtual LabelScheme scheme() const = 0;
    /// Label for the given exposure of `scene`. Throws LabelError when unavailable.
    virtual Image label(const SceneRecord& scene, Exposure ev) const = 0;
};

/// The scene's normalized HDR for every exposure.
class TrueHdrLabels final : public LabelProvider {
public:
    LabelScheme scheme() const override { return LabelScheme::true_hdr; }
    Image label(const SceneRecord& scene, Exposure ev) const override;
};

/// The LDR input itself.
class IdentityLabels final : public LabelProvider {
public:
    LabelScheme scheme() const override { return LabelScheme::identity; }
    Image label(const SceneRecord& scene, Exposure ev) const override;
};

/// Precomputed predictions at <dir>/<scene_id>/<ev tag>.hdr (preferred) or
/// .png. HDR files are preprocessed like the dataset and normalized by
/// their own 99.9th percentile; PNGs are used as [0, 1] values directly.
class FilePseudoLabels final : public LabelProvider {
public:
    FilePseudoLabels(std::filesystem::path dir, Preprocess pre);
    LabelScheme scheme() const override { return LabelScheme::file_pseudo; }
    Image label(const SceneRecord& scene, Exposure ev) const override;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    Preprocess pre_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, Image> cache_;
};

/// `dir` is only used by file_pseudo.
std::unique_ptr<LabelProvider> make_label_provider(LabelScheme scheme, const std::filesystem::path& dir = {},
                                                   const Preprocess& pre = {});

struct Example {
    Exposure ev = Exposure::zero;
    Image ldr;
    Image label;
};

struct Task {
    std::string scene_id;
    std::vector<Example> support;
    Example query;
    LabelScheme label_scheme = LabelScheme::true_hdr;

    /// Throws ContractError unless exposures are distinct and sizes and ranges agree.
    void validate() const;
};

/// Query = `holdout` exposure with the true HDR as label; support = the
/// other two exposures labelled by `labels`.
Task make_task(const SceneRecord& scene, Exposure holdout, const LabelProvider& labels);

// ---------------------------------------------------------------------------
// Model-agnostic core, written against a plain parameter list and loss
// closure so it also runs on toy models.

template <class T>
using ParamLoss = std::function<Tensor<T>(std::span<const Tensor<T>>)>;

/// phi <- theta; `steps` times phi <- phi - inner_lr * grad L(phi). In
/// second-order mode the result stays differentiable through every step;
/// in first-order mode step gradients enter as constants.
/// A non-finite loss or gradient raises AdaptationError with the step index.
template <class T>
std::vector<Tensor<T>> adapt_params(std::span<const Tensor<T>> theta, const ParamLoss<T>& support_loss,
                                    const AdaptConfig& cfg);

/// Stateful outer optimizer (Adam or SGD) over a fixed list of tensor shapes.
template <class T>
class OuterOptimizer {
public:
    OuterOptimizer(OptimizerKind kind, double lr, AdamParams adam = {});

    /// Returns detached updated tensors.
    std::vector<Tensor<T>> step(std::span<const Tensor<T>> params, std::span<const Tensor<T>> grads);
    ParamSet<T> step(const ParamSet<T>& params, std::span<const Tensor<T>> grads);

    long long steps_taken() const { return t_; }

private:
    OptimizerKind kind_;
    double lr_;
    AdamParams adam_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

template <class T>
struct MetaGradient {
    /// Mean over tasks of the objective gradients, in parameter order.
    std::vector<Tensor<T>> grads;
    /// Mean objective value before the update.
    double mean_loss = 0.0;
};

/// Gradient of the mean of `objectives` (each a function of theta). Tasks are
/// evaluated on up to `threads` workers; accumulation follows task order.
/// Failures raise TrainingError listing the failing task labels.
template <class T>
MetaGradient<T> mean_meta_gradient(std::span<const Tensor<T>> theta, std::span<const ParamLoss<T>> objectives,
                                   std::span<const std::string> task_labels, int threads = 1);

// ---------------------------------------------------------------------------
// UNet tasks.

/// Mean over support pairs of the per-image loss. Every image runs through
/// the network on its own (batch of one).
template <class T>
Tensor<T> support_loss(const ParamSet<T>& params, const Task& task, const LossConfig& loss);

template <class T>
Tensor<T> query_loss(const ParamSet<T>& params, const Task& task, const LossConfig& loss);

template <class T>
ParamSet<T> adapt(const ParamSet<T>& theta, const Task& task, const AdaptConfig& cfg, const LossConfig& loss);

/// Query loss of the adapted parameters.
template <class T>
Tensor<T> meta_objective(const ParamSet<T>& theta, const Task& task, const AdaptConfig& acfg,
                         const LossConfig& loss);

template <class T>
struct MetaStepResult {
    ParamSet<T> params;
    double mean_loss = 0.0;
};

/// One outer update on `batch` (size must equal meta_batch).
template <class T>
MetaStepResult<T> meta_step(const ParamSet<T>& theta, std::span<const Task> batch, const MetaConfig& mcfg,
                            const AdaptConfig& acfg, OuterOptimizer<T>& optimizer);

/// Network output for one LDR image, without recording a graph.
template <class T>
Image predict(const ParamSet<T>& params, const Image& ldr);

// ---------------------------------------------------------------------------
// Evaluation.

enum class EvalMode { single_shot, adapt_true_hdr, adapt_pseudo };

std::string_view eval_mode_name(EvalMode mode);
std::optional<EvalMode> parse_eval_mode(std::string_view text);
ReportRow report_row(EvalMode mode);

using PredictionSink =
    std::function<void(const SceneRecord& scene, Exposure holdout, ReportRow row, const Image& prediction)>;

struct EvalOptions {
    AdaptConfig adapt;
    LossConfig loss;
    std::vector<EvalMode> modes{EvalMode::single_shot, EvalMode::adapt_true_hdr};
    /// Adds the held-out LDR scored directly against the HDR.
    bool baseline = true;
    /// Required by adapt_pseudo.
    const LabelProvider* pseudo_labels = nullptr;
    int threads = 1;
    /// Called (possibly from worker threads, serialized) for every prediction.
    PredictionSink sink;
};

/// Scores every scene under every hold-out exposure and mode against the
/// normalized HDR. Scenes whose pseudo-labels cannot be loaded are skipped
/// for adapt_pseudo and listed in the report.
template <class T>
MetricReport evaluate(const ParamSet<T>& theta, std::span<const SceneRecord> scenes, const EvalOptions& options);

// ---------------------------------------------------------------------------
// Training driver.

struct IterationRecord {
    int iteration = 0;
    double meta_loss = 0.0;
    std::optional<double> val_ssim;
};

template <class T>
struct TrainResult {
    ParamSet<T> params;
    ParamSet<T> best_params;
    std::vector<IterationRecord> history;
    /// Validation SSIM of best_params (of the initial parameters when never validated).
    std::optional<double> best_val_ssim;
    int best_iteration = 0;
    /// Training scenes dropped because their labels were unavailable.
    std::vector<std::pair<std::string, std::string>> skipped;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

/// Runs `iterations` meta-steps from `init`. Each task draws a scene and a
/// uniformly random query exposure from an RNG seeded by mcfg.seed.
/// Throws ConfigError when either split is empty.
template <class T>
TrainResult<T> train(const ParamSet<T>& init, std::span<const SceneRecord> train_scenes,
                     std::span<const SceneRecord> val_scenes, const MetaConfig& mcfg, const AdaptConfig& acfg,
                     const LabelProvider& labels, const IterationCallback& on_iteration = {});

/// Mean SSIM of adapted predictions over every scene and hold-out.
template <class T>
double validation_ssim(const ParamSet<T>& theta, std::span<const SceneRecord> scenes, const AdaptConfig& acfg,
                       const LossConfig& loss, const LabelProvider& labels, int threads = 1);

/// Writes iteration,meta_loss,val_ssim rows (val_ssim blank when not measured).
void write_history_csv(std::ostream& os, std::span<const IterationRecord> history);

}  // namespace metahdr
