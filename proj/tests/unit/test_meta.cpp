#include "metahdr/autograd.hpp"
#include "metahdr/meta.hpp"
#include "metahdr/ops.hpp"
#include "metahdr/rgbe.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace metahdr;
using TD = Tensor<double>;

namespace {

TD s(double v) { return TD::scalar(v); }

// (p - target)^2 for a one-element parameter list.
ParamLoss<double> quadratic(double target) {
    return [target](std::span<const TD> p) {
        const auto d = add_scalar(p[0], -target);
        return mul(d, d);
    };
}

AdaptConfig acfg(double lr, int steps, MetaMode mode = MetaMode::second_order) {
    AdaptConfig c;
    c.inner_lr = lr;
    c.steps = steps;
    c.mode = mode;
    return c;
}

// Query loss (phi - b)^2 after adapting p on (p - a)^2.
ParamLoss<double> toy_objective(double a, double b, const AdaptConfig& cfg) {
    return [a, b, cfg](std::span<const TD> theta) {
        const auto phi = adapt_params<double>(theta, quadratic(a), cfg);
        return quadratic(b)(phi);
    };
}

// phi = a + (1 - 2 lr)^k (p - a); d phi / dp = (1 - 2 lr)^k.
double toy_meta_gradient(double p, double a, double b, double lr, int k, bool second_order) {
    const double shrink = std::pow(1.0 - 2.0 * lr, k);
    const double phi = a + shrink * (p - a);
    return 2.0 * (phi - b) * (second_order ? shrink : 1.0);
}

UNetConfig tiny_net() {
    UNetConfig c;
    c.depth = 1;
    c.base_channels = 4;
    return c;
}

std::vector<double> flat(const ParamSet<double>& p) {
    std::vector<double> out;
    for (const auto& t : p.tensors()) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
}

MetaConfig mcfg(int batch, double lr, OptimizerKind opt = OptimizerKind::sgd) {
    MetaConfig m;
    m.meta_batch = batch;
    m.outer_lr = lr;
    m.optimizer = opt;
    return m;
}

bool same_report(const MetricReport& a, const MetricReport& b, ReportRow ra, ReportRow rb) {
    std::vector<MetricItem> x, y;
    for (const auto& i : a.items())
        if (i.row == ra) x.push_back(i);
    for (const auto& i : b.items())
        if (i.row == rb) y.push_back(i);
    if (x.size() != y.size() || x.empty()) return false;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k].scene_id != y[k].scene_id || x[k].holdout_ev != y[k].holdout_ev || x[k].ssim != y[k].ssim ||
            x[k].psnr_db != y[k].psnr_db) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST(AdaptParams, OneStepOnQuadratic) {
    const std::vector<TD> theta{s(1.0)};
    const auto phi = adapt_params<double>(theta, quadratic(0.0), acfg(0.1, 1));
    EXPECT_NEAR(phi[0].item(), 0.8, 1e-15);
}

TEST(AdaptParams, ZeroRateOrStepsReturnTheta) {
    const std::vector<TD> theta{s(1.7)};
    EXPECT_EQ(adapt_params<double>(theta, quadratic(0.0), acfg(0.0, 3))[0].item(), 1.7);
    EXPECT_EQ(adapt_params<double>(theta, quadratic(0.0), acfg(0.1, 0))[0].item(), 1.7);
}

TEST(AdaptParams, NonFiniteLossReportsStep) {
    // sqrt(p) with a large step drives p negative on the first update.
    const ParamLoss<double> root = [](std::span<const TD> p) { return pow_scalar(p[0], 0.5); };
    const std::vector<TD> theta{s(0.01)};
    try {
        adapt_params<double>(theta, root, acfg(1.0, 3));
        FAIL();
    } catch (const AdaptationError& e) {
        EXPECT_EQ(e.step(), 1);
    }
}

TEST(AdaptParams, ConfigValidation) {
    const std::vector<TD> theta{s(1.0)};
    EXPECT_THROW(adapt_params<double>(theta, quadratic(0.0), acfg(-0.1, 1)), ConfigError);
    EXPECT_THROW(adapt_params<double>(theta, quadratic(0.0), acfg(0.1, -1)), ConfigError);
}

TEST(MetaGradient, MatchesClosedFormForQuadraticToy) {
    for (int k : {1, 2, 3}) {
        for (auto mode : {MetaMode::second_order, MetaMode::first_order}) {
            const double p = 0.7, a = -0.4, b = 1.3, lr = 0.15;
            const std::vector<TD> theta{s(p)};
            const std::vector<ParamLoss<double>> obj{toy_objective(a, b, acfg(lr, k, mode))};
            const auto g = mean_meta_gradient<double>(theta, obj, {});
            EXPECT_NEAR(g.grads[0].item(), toy_meta_gradient(p, a, b, lr, k, mode == MetaMode::second_order), 1e-12)
                << "steps " << k;
        }
    }
}

TEST(MetaGradient, SecondOrderMatchesFiniteDifference) {
    const auto f = toy_objective(0.2, -0.5, acfg(0.2, 3));
    const std::vector<TD> theta{s(0.9)};
    const auto g = mean_meta_gradient<double>(theta, std::vector<ParamLoss<double>>{f}, {});
    const auto fd = fd_gradient<double>(
        [&](const TD& x) {
            const std::vector<TD> t{x};
            return f(t).item();
        },
        theta[0], 1e-5);
    EXPECT_NEAR(g.grads[0].item(), fd.item(), 1e-8);
}

TEST(MetaGradient, MeanOverTasksAndSgdUpdate) {
    const double p = 0.3, lr = 0.1, outer = 0.05;
    const std::vector<TD> theta{s(p)};
    const std::vector<ParamLoss<double>> obj{toy_objective(1.0, 2.0, acfg(lr, 2)), toy_objective(-1.0, 0.5, acfg(lr, 2))};
    const auto g = mean_meta_gradient<double>(theta, obj, {});
    const double expected =
        0.5 * (toy_meta_gradient(p, 1.0, 2.0, lr, 2, true) + toy_meta_gradient(p, -1.0, 0.5, lr, 2, true));
    EXPECT_NEAR(g.grads[0].item(), expected, 1e-12);

    OuterOptimizer<double> opt(OptimizerKind::sgd, outer);
    const auto next = opt.step(std::span<const TD>(theta), std::span<const TD>(g.grads));
    EXPECT_NEAR(next[0].item(), p - outer * expected, 1e-12);
    EXPECT_FALSE(next[0].requires_grad());
    EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(MetaGradient, FailuresNameTasks) {
    const ParamLoss<double> bad = [](std::span<const TD> p) { return div(p[0], sub(p[0], p[0])); };
    const std::vector<TD> theta{s(1.0)};
    const std::vector<ParamLoss<double>> obj{quadratic(0.0), bad};
    const std::vector<std::string> labels{"good@ev0", "broken@ev+2"};
    try {
        mean_meta_gradient<double>(theta, obj, labels);
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("broken@ev+2"), std::string::npos);
        EXPECT_EQ(std::string(e.what()).find("good@ev0"), std::string::npos);
    }
}

TEST(OuterOptimizer, AdamFirstStepIsSignedLearningRate) {
    OuterOptimizer<double> opt(OptimizerKind::adam, 0.01);
    const std::vector<TD> p{TD({3}, {1.0, 2.0, 3.0})};
    const std::vector<TD> g{TD({3}, {0.5, -4.0, 0.0})};
    const auto next = opt.step(std::span<const TD>(p), std::span<const TD>(g));
    EXPECT_NEAR(next[0].values()[0], 1.0 - 0.01, 1e-9);
    EXPECT_NEAR(next[0].values()[1], 2.0 + 0.01, 1e-9);
    EXPECT_EQ(next[0].values()[2], 3.0);
}

TEST(OuterOptimizer, ZeroRateLeavesParams) {
    OuterOptimizer<double> opt(OptimizerKind::adam, 0.0);
    const std::vector<TD> p{TD({2}, {1.0, 2.0})};
    const std::vector<TD> g{TD({2}, {3.0, -3.0})};
    EXPECT_EQ(opt.step(std::span<const TD>(p), std::span<const TD>(g))[0].to_vector(), p[0].to_vector());
    EXPECT_THROW(OuterOptimizer<double>(OptimizerKind::sgd, -1.0), ConfigError);
}

TEST(Task, StructureAndLabels) {
    const auto scene = synth_scene(3, 16);
    TrueHdrLabels truth;
    const auto task = make_task(scene, Exposure::plus2, truth);
    EXPECT_NO_THROW(task.validate());
    ASSERT_EQ(task.support.size(), 2u);
    EXPECT_EQ(task.support[0].ev, Exposure::minus2);
    EXPECT_EQ(task.support[1].ev, Exposure::zero);
    for (const auto& ex : task.support) EXPECT_EQ(ex.label.data, scene.hdr_normalized.data);
    EXPECT_EQ(task.query.label.data, scene.hdr_normalized.data);
    EXPECT_EQ(task.query.ldr.data, scene.ldr_at(Exposure::plus2).data);

    IdentityLabels ident;
    const auto t2 = make_task(scene, Exposure::zero, ident);
    for (const auto& ex : t2.support) EXPECT_EQ(ex.label.data, ex.ldr.data);
    EXPECT_EQ(t2.query.label.data, scene.hdr_normalized.data);
}

TEST(Task, ValidationRejectsMismatches) {
    const auto scene = synth_scene(3, 16);
    auto task = make_task(scene, Exposure::zero, TrueHdrLabels{});
    task.support[1].ev = Exposure::minus2;
    EXPECT_THROW(task.validate(), ContractError);
    task = make_task(scene, Exposure::zero, TrueHdrLabels{});
    task.support[0].label = Image(3, 8, 8);
    EXPECT_THROW(task.validate(), ContractError);
}

TEST(UNetMeta, ZeroRateObjectiveIsQueryLoss) {
    const auto theta = init_params<double>(tiny_net(), 1);
    const auto task = make_task(synth_scene(5, 8), Exposure::zero, TrueHdrLabels{});
    const LossConfig loss;
    EXPECT_EQ(meta_objective(theta, task, acfg(0.0, 3), loss).item(), query_loss(theta, task, loss).item());
}

TEST(UNetMeta, SupportLossIsMeanOfPerImageLosses) {
    const auto theta = init_params<double>(tiny_net(), 1);
    const auto task = make_task(synth_scene(5, 8), Exposure::zero, TrueHdrLabels{});
    const LossConfig loss;
    double expected = 0.0;
    for (const auto& ex : task.support) {
        expected += expandnet_loss(forward(theta, to_tensor<double>(ex.ldr)), to_tensor<double>(ex.label), loss).item();
    }
    EXPECT_NEAR(support_loss(theta, task, loss).item(), expected / 2.0, 1e-12);
}

TEST(UNetMeta, AdaptationLowersSupportLoss) {
    const auto theta = init_params<double>(tiny_net(), 2);
    const auto task = make_task(synth_scene(6, 8), Exposure::plus2, TrueHdrLabels{});
    const LossConfig loss;
    const auto phi = adapt(theta, task, acfg(0.01, 3), loss);
    EXPECT_LT(support_loss(phi, task, loss).item(), support_loss(theta, task, loss).item());
}

TEST(UNetMeta, OuterRateZeroKeepsTheta) {
    const auto theta = init_params<double>(tiny_net(), 3);
    const std::vector<Task> batch{make_task(synth_scene(7, 8), Exposure::zero, TrueHdrLabels{})};
    OuterOptimizer<double> opt(OptimizerKind::sgd, 0.0);
    const auto r = meta_step(theta, batch, mcfg(1, 0.0), acfg(0.01, 2), opt);
    EXPECT_EQ(flat(r.params), flat(theta));
    EXPECT_GT(r.mean_loss, 0.0);
}

TEST(UNetMeta, RepeatedTaskEqualsSingleTask) {
    const auto theta = init_params<double>(tiny_net(), 4);
    const auto task = make_task(synth_scene(8, 8), Exposure::minus2, TrueHdrLabels{});
    const std::vector<Task> one{task};
    const std::vector<Task> three{task, task, task};
    OuterOptimizer<double> o1(OptimizerKind::sgd, 0.01), o3(OptimizerKind::sgd, 0.01);
    const auto a = meta_step(theta, one, mcfg(1, 0.01), acfg(0.01, 2), o1);
    const auto b = meta_step(theta, three, mcfg(3, 0.01), acfg(0.01, 2), o3);
    const auto fa = flat(a.params), fb = flat(b.params);
    for (std::size_t i = 0; i < fa.size(); ++i) ASSERT_NEAR(fa[i], fb[i], 1e-15);
    EXPECT_NEAR(a.mean_loss, b.mean_loss, 1e-15);
}

TEST(UNetMeta, FirstAndSecondOrderAgreeAtZeroRate) {
    const auto theta = init_params<double>(tiny_net(), 5);
    const std::vector<Task> batch{make_task(synth_scene(9, 8), Exposure::zero, TrueHdrLabels{}),
                                  make_task(synth_scene(10, 8), Exposure::plus2, TrueHdrLabels{})};
    OuterOptimizer<double> o1(OptimizerKind::sgd, 0.01), o2(OptimizerKind::sgd, 0.01);
    const auto so = meta_step(theta, batch, mcfg(2, 0.01), acfg(0.0, 3, MetaMode::second_order), o1);
    const auto fo = meta_step(theta, batch, mcfg(2, 0.01), acfg(0.0, 3, MetaMode::first_order), o2);
    EXPECT_EQ(flat(so.params), flat(fo.params));
}

TEST(UNetMeta, SecondOrderDiffersFromFirstOrder) {
    const auto theta = init_params<double>(tiny_net(), 5);
    const std::vector<Task> batch{make_task(synth_scene(9, 8), Exposure::zero, TrueHdrLabels{})};
    OuterOptimizer<double> o1(OptimizerKind::sgd, 0.01), o2(OptimizerKind::sgd, 0.01);
    const auto so = meta_step(theta, batch, mcfg(1, 0.01), acfg(0.05, 3, MetaMode::second_order), o1);
    const auto fo = meta_step(theta, batch, mcfg(1, 0.01), acfg(0.05, 3, MetaMode::first_order), o2);
    EXPECT_NE(flat(so.params), flat(fo.params));
}

TEST(UNetMeta, BatchSizeMustMatch) {
    const auto theta = init_params<double>(tiny_net(), 1);
    const std::vector<Task> batch{make_task(synth_scene(9, 8), Exposure::zero, TrueHdrLabels{})};
    OuterOptimizer<double> opt(OptimizerKind::sgd, 0.01);
    EXPECT_THROW(meta_step(theta, batch, mcfg(5, 0.01), acfg(0.01, 1), opt), ContractError);
}

TEST(UNetMeta, ThreadCountDoesNotChangeResult) {
    const auto theta = init_params<float>(tiny_net(), 6);
    std::vector<Task> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(make_task(synth_scene(20 + i, 8), Exposure::zero, TrueHdrLabels{}));
    auto run = [&](int threads) {
        MetaConfig m = mcfg(4, 0.01, OptimizerKind::adam);
        m.threads = threads;
        OuterOptimizer<float> opt(OptimizerKind::adam, 0.01);
        return meta_step(theta, batch, m, acfg(0.01, 2), opt);
    };
    const auto a = run(1), b = run(3);
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].to_vector(), b.params[i].to_vector());
    EXPECT_EQ(a.mean_loss, b.mean_loss);
}

TEST(Evaluate, IdentityStubEqualsBaseline) {
    UNetConfig c = tiny_net();
    c.architecture = Architecture::identity;
    const auto theta = init_params<float>(c, 0);
    const auto scenes = synth_scenes(40, 3, 16);
    EvalOptions opt;
    opt.modes = {EvalMode::single_shot};
    const auto r = evaluate(theta, scenes, opt);
    EXPECT_TRUE(same_report(r, r, ReportRow::single_shot, ReportRow::ldr_no_recon));
    EXPECT_EQ(r.items().size(), 2u * 3 * 3);
}

TEST(Evaluate, ZeroRateAdaptEqualsSingleShot) {
    const auto theta = init_params<float>(tiny_net(), 1);
    const auto scenes = synth_scenes(50, 2, 16);
    EvalOptions opt;
    opt.adapt = acfg(0.0, 3);
    opt.modes = {EvalMode::single_shot, EvalMode::adapt_true_hdr};
    const auto r = evaluate(theta, scenes, opt);
    EXPECT_TRUE(same_report(r, r, ReportRow::single_shot, ReportRow::adapt_true_hdr));
}

TEST(Evaluate, ThreadCountDoesNotChangeReport) {
    const auto theta = init_params<float>(tiny_net(), 1);
    const auto scenes = synth_scenes(50, 3, 16);
    EvalOptions opt;
    const auto a = evaluate(theta, scenes, opt);
    opt.threads = 3;
    const auto b = evaluate(theta, scenes, opt);
    for (auto row : {ReportRow::ldr_no_recon, ReportRow::single_shot, ReportRow::adapt_true_hdr})
        EXPECT_TRUE(same_report(a, b, row, row));
}

TEST(Evaluate, PseudoLabelsCopiedFromTruthMatchTrueHdr) {
    test::TempDir data("ds"), labels("labels");
    for (std::uint64_t seed : {60u, 61u}) {
        const auto scene = synth_scene(seed, 16);
        save_scene(data / scene.scene_id, scene);
        std::filesystem::create_directories(labels / scene.scene_id);
        for (auto ev : kExposures) {
            std::filesystem::copy_file(data / scene.scene_id / "gt.hdr",
                                       labels / scene.scene_id / (std::string(ev_tag(ev)) + ".hdr"));
        }
    }
    const Preprocess pre{0, 1};
    const auto ds = load_dataset(data.path(), pre);
    ASSERT_EQ(ds.scenes.size(), 2u);
    const auto provider = make_label_provider(LabelScheme::file_pseudo, labels.path(), pre);
    const auto theta = init_params<float>(tiny_net(), 2);
    EvalOptions opt;
    opt.modes = {EvalMode::adapt_true_hdr, EvalMode::adapt_pseudo};
    opt.pseudo_labels = provider.get();
    const auto r = evaluate(theta, ds.scenes, opt);
    EXPECT_TRUE(same_report(r, r, ReportRow::adapt_true_hdr, ReportRow::adapt_pseudo));
    EXPECT_TRUE(r.skipped().empty());
}

TEST(Evaluate, MissingPseudoLabelsSkipScene) {
    test::TempDir labels("labels");
    const auto scenes = synth_scenes(70, 2, 16);
    std::filesystem::create_directories(labels / scenes[0].scene_id);
    for (auto ev : kExposures) {
        write_rgbe_file(labels / scenes[0].scene_id / (std::string(ev_tag(ev)) + ".hdr"), scenes[0].hdr);
    }
    const auto provider = make_label_provider(LabelScheme::file_pseudo, labels.path(), Preprocess{0, 1});
    EvalOptions opt;
    opt.modes = {EvalMode::adapt_pseudo};
    opt.pseudo_labels = provider.get();
    const auto r = evaluate(init_params<float>(tiny_net(), 2), scenes, opt);
    ASSERT_EQ(r.skipped().size(), 1u);
    EXPECT_EQ(r.skipped()[0].scene_id, scenes[1].scene_id);
    EXPECT_NE(r.skipped()[0].reason.find(scenes[1].scene_id), std::string::npos);
    EXPECT_EQ(r.summary(ReportRow::adapt_pseudo)->count, 3u);
}

TEST(Labels, FilePseudoErrors) {
    test::TempDir labels("labels");
    const auto scene = synth_scene(80, 16);
    FilePseudoLabels provider(labels.path(), Preprocess{0, 1});
    EXPECT_THROW(provider.label(scene, Exposure::zero), LabelError);
    std::filesystem::create_directories(labels / scene.scene_id);
    write_rgbe_file(labels / scene.scene_id / "ev0.hdr", Image(3, 8, 8, 1.0f));
    EXPECT_THROW(provider.label(scene, Exposure::zero), LabelError);
    {
        std::ofstream os(labels / scene.scene_id / "ev-2.hdr");
        os << "garbage";
    }
    EXPECT_THROW(provider.label(scene, Exposure::minus2), LabelError);
    EXPECT_THROW(make_label_provider(LabelScheme::file_pseudo, labels / "absent"), ConfigError);
    EXPECT_THROW(make_label_provider(LabelScheme::file_pseudo, {}), ConfigError);
}

TEST(Labels, SchemeNames) {
    for (auto s : {LabelScheme::true_hdr, LabelScheme::file_pseudo, LabelScheme::identity})
        EXPECT_EQ(parse_scheme(scheme_name(s)), s);
    EXPECT_EQ(parse_mode("fo"), MetaMode::first_order);
    EXPECT_EQ(parse_mode("so"), MetaMode::second_order);
    EXPECT_FALSE(parse_mode("third"));
    EXPECT_EQ(parse_eval_mode("adapt_pseudo"), EvalMode::adapt_pseudo);
}

namespace {

struct TrainFixture {
    std::vector<SceneRecord> train = synth_scenes(100, 6, 16);
    std::vector<SceneRecord> val = synth_scenes(200, 2, 16);
    ParamSet<float> init = init_params<float>(tiny_net(), 9);
    MetaConfig meta = [] {
        MetaConfig m;
        m.iterations = 4;
        m.meta_batch = 2;
        m.val_every = 2;
        m.seed = 3;
        return m;
    }();
    AdaptConfig adapt = acfg(0.01, 2);
    TrueHdrLabels labels;

    TrainResult<float> run() const { return metahdr::train(init, train, val, meta, adapt, labels); }
};

}  // namespace

TEST(Train, ZeroIterationsReturnsInit) {
    TrainFixture f;
    f.meta.iterations = 0;
    const auto r = f.run();
    EXPECT_TRUE(r.history.empty());
    for (std::size_t i = 0; i < f.init.size(); ++i) EXPECT_EQ(r.params[i].to_vector(), f.init[i].to_vector());
}

TEST(Train, HistoryIsDeterministic) {
    TrainFixture f;
    const auto a = f.run(), b = f.run();
    ASSERT_EQ(a.history.size(), 4u);
    std::ostringstream ca, cb;
    write_history_csv(ca, a.history);
    write_history_csv(cb, b.history);
    EXPECT_EQ(ca.str(), cb.str());
    for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i].to_vector(), b.params[i].to_vector());
    EXPECT_TRUE(a.history[1].val_ssim);
    EXPECT_FALSE(a.history[0].val_ssim);
    EXPECT_TRUE(a.history[3].val_ssim);
}

TEST(Train, BestParamsTrackValidation) {
    TrainFixture f;
    const auto r = f.run();
    ASSERT_TRUE(r.best_val_ssim);
    double best = -1.0;
    for (const auto& rec : r.history)
        if (rec.val_ssim) best = std::max(best, *rec.val_ssim);
    EXPECT_GE(*r.best_val_ssim, best);
    const double again = validation_ssim(r.best_params, f.val, f.adapt, f.meta.loss, f.labels);
    EXPECT_NEAR(again, *r.best_val_ssim, 1e-12);
}

TEST(Train, SplitErrors) {
    TrainFixture f;
    EXPECT_THROW(metahdr::train(f.init, {}, f.val, f.meta, f.adapt, f.labels), ConfigError);
    EXPECT_THROW(metahdr::train(f.init, f.train, {}, f.meta, f.adapt, f.labels), ConfigError);
    EXPECT_THROW(metahdr::train(f.init, f.train, f.train, f.meta, f.adapt, f.labels), ConfigError);
}

TEST(Train, HistoryCsvFormat) {
    std::ostringstream os;
    const std::vector<IterationRecord> h{{1, 0.5, std::nullopt}, {2, 0.25, 0.75}};
    write_history_csv(os, h);
    EXPECT_EQ(os.str(), "iteration,meta_loss,val_ssim\n1,0.5,\n2,0.25,0.750000\n");
}
