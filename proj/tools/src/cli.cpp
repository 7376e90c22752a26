#include "cli.hpp"

#include "CLI11.hpp"

#include "metahdr/data.hpp"
#include "metahdr/errors.hpp"
#include "metahdr/gradcheck.hpp"
#include "metahdr/meta.hpp"
#include "metahdr/metrics.hpp"
#include "metahdr/param_io.hpp"
#include "metahdr/png_io.hpp"
#include "metahdr/rgbe.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace metahdr::cli {

namespace {

struct UsageError : Error {
    using Error::Error;
};

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

Preprocess preprocess_of(const RunConfig& rc) { return {rc.crop, rc.downscale}; }

UNetConfig net_of(const RunConfig& rc) {
    UNetConfig cfg;
    cfg.depth = rc.depth;
    cfg.base_channels = rc.base_channels;
    cfg.eps = rc.bn_eps;
    cfg.validate();
    return cfg;
}

AdaptConfig adapt_of(const RunConfig& rc) {
    AdaptConfig a;
    a.inner_lr = rc.alpha;
    a.steps = rc.steps;
    auto mode = parse_mode(rc.mode);
    if (!mode) throw UsageError("--mode must be fo or so, got " + rc.mode);
    a.mode = *mode;
    a.validate();
    return a;
}

MetaConfig meta_of(const RunConfig& rc) {
    MetaConfig m;
    m.outer_lr = rc.outer_lr;
    m.meta_batch = rc.meta_batch;
    m.iterations = rc.iterations;
    m.seed = rc.seed;
    m.loss.lambda = rc.lambda;
    auto opt = parse_optimizer(rc.optimizer);
    if (!opt) throw UsageError("--optimizer must be adam or sgd, got " + rc.optimizer);
    m.optimizer = *opt;
    m.val_every = rc.val_every;
    m.threads = rc.threads;
    m.validate();
    return m;
}

LabelScheme scheme_of(const RunConfig& rc) {
    auto s = parse_scheme(rc.label_scheme);
    if (!s) throw UsageError("--label-scheme must be true_hdr, file_pseudo or identity, got " + rc.label_scheme);
    return *s;
}

// All scenes of the run: generated, or loaded from the dataset root.
std::vector<SceneRecord> load_scenes(const RunConfig& rc, std::ostream& err) {
    if (rc.synthetic) {
        if (rc.synth_scenes < 3) throw UsageError("--synth-scenes must be >= 3");
        return synth_scenes(rc.synth_seed, rc.synth_scenes, rc.synth_size);
    }
    if (rc.dataset.empty()) throw UsageError("either --dataset or --synthetic is required");
    auto loaded = load_dataset(rc.dataset, preprocess_of(rc));
    for (const auto& [id, why] : loaded.skipped) err << "skipping scene " << id << ": " << why << '\n';
    return std::move(loaded.scenes);
}

struct Splits {
    std::vector<SceneRecord> train, val, test;
};

Splits split_of(const RunConfig& rc, std::vector<SceneRecord> scenes) {
    if (rc.split.size() != 3) throw UsageError("--split takes three fractions");
    SplitSpec spec{rc.split[0], rc.split[1], rc.split[2], rc.seed};
    std::vector<std::string> ids;
    for (const auto& s : scenes) ids.push_back(s.scene_id);
    const auto parts = split_scenes(ids, spec);
    std::map<std::string, SceneRecord*> by_id;
    for (auto& s : scenes) by_id[s.scene_id] = &s;
    Splits out;
    auto take = [&](const std::vector<std::string>& part, std::vector<SceneRecord>& dst) {
        for (const auto& id : part) dst.push_back(std::move(*by_id.at(id)));
    };
    take(parts.train, out.train);
    take(parts.val, out.val);
    take(parts.test, out.test);
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os << text;
}

std::string preview_name(const std::string& scene_id, Exposure ev, std::string_view what) {
    return scene_id + "_" + std::string(ev_tag(ev)) + "_" + std::string(what) + ".png";
}

Manifest manifest_of(const RunConfig& rc) {
    auto split = [&] {
        std::ostringstream os;
        os << rc.split[0] << ',' << rc.split[1] << ',' << rc.split[2];
        return os.str();
    }();
    return {
        {"dataset", rc.synthetic ? "synthetic" : rc.dataset.string()},
        {"seed", std::to_string(rc.seed)},
        {"depth", std::to_string(rc.depth)},
        {"base-channels", std::to_string(rc.base_channels)},
        {"bn-eps", fmt("%g", rc.bn_eps)},
        {"iterations", std::to_string(rc.iterations)},
        {"meta-batch", std::to_string(rc.meta_batch)},
        {"outer-lr", fmt("%g", rc.outer_lr)},
        {"optimizer", rc.optimizer},
        {"val-every", std::to_string(rc.val_every)},
        {"alpha", fmt("%g", rc.alpha)},
        {"steps", std::to_string(rc.steps)},
        {"mode", rc.mode},
        {"lambda", fmt("%g", rc.lambda)},
        {"crop", std::to_string(rc.crop)},
        {"downscale", std::to_string(rc.downscale)},
        {"split", split},
        {"label-scheme", rc.label_scheme},
        {"labels-dir", rc.labels_dir.string()},
        {"synth-scenes", std::to_string(rc.synth_scenes)},
        {"synth-size", std::to_string(rc.synth_size)},
        {"synth-seed", std::to_string(rc.synth_seed)},
    };
}

int cmd_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
    const auto net = net_of(rc);
    const auto meta = meta_of(rc);
    const auto acfg = adapt_of(rc);
    const auto splits = split_of(rc, load_scenes(rc, err));
    const auto labels = make_label_provider(scheme_of(rc), rc.labels_dir, preprocess_of(rc));
    std::filesystem::create_directories(rc.out);

    {
        std::ostringstream os;
        os << "scene_id,part\n";
        for (const auto& s : splits.train) os << s.scene_id << ",train\n";
        for (const auto& s : splits.val) os << s.scene_id << ",val\n";
        for (const auto& s : splits.test) os << s.scene_id << ",test\n";
        write_file(rc.out / "split.csv", os.str());
    }

    const auto init = init_params<float>(net, rc.seed);
    save_checkpoint(rc.out / "init.mhp", init);
    out << "scenes: " << splits.train.size() << " train, " << splits.val.size() << " val, " << splits.test.size()
        << " test; " << init.parameter_count() << " parameters\n";

    auto result = train(init, splits.train, splits.val, meta, acfg, *labels, [&](const IterationRecord& rec) {
        out << "iter " << rec.iteration << '/' << meta.iterations << " meta_loss " << fmt("%.6f", rec.meta_loss);
        if (rec.val_ssim) out << " val_ssim " << fmt("%.4f", *rec.val_ssim);
        out << '\n' << std::flush;
    });
    for (const auto& [id, why] : result.skipped) err << "training skipped scene " << id << ": " << why << '\n';

    save_checkpoint(rc.out / "final.mhp", result.params);
    save_checkpoint(rc.out / "best.mhp", result.best_params);
    {
        std::ofstream os(rc.out / "history.csv");
        write_history_csv(os, result.history);
    }
    auto manifest = manifest_of(rc);
    manifest.emplace_back("parameters", std::to_string(init.parameter_count()));
    manifest.emplace_back("completed-iterations", std::to_string(result.history.size()));
    manifest.emplace_back("best-iteration", std::to_string(result.best_iteration));
    manifest.emplace_back("best-val-ssim", result.best_val_ssim ? fmt("%.6f", *result.best_val_ssim) : "");
    write_manifest(rc.out / "manifest.txt", manifest);
    out << "wrote " << (rc.out / "best.mhp").string() << '\n';
    return 0;
}

std::vector<EvalMode> eval_modes_of(const RunConfig& rc) {
    if (rc.eval_mode == "all") {
        std::vector<EvalMode> modes{EvalMode::single_shot, EvalMode::adapt_true_hdr};
        if (!rc.labels_dir.empty()) modes.push_back(EvalMode::adapt_pseudo);
        return modes;
    }
    auto mode = parse_eval_mode(rc.eval_mode);
    if (!mode) {
        throw UsageError("--eval-mode must be all, single_shot, adapt_true_hdr or adapt_pseudo, got " + rc.eval_mode);
    }
    return {*mode};
}

ParamSet<float> load_model(const RunConfig& rc, const CLI::App& app) {
    if (rc.checkpoint.empty()) throw UsageError("--checkpoint is required");
    auto params = load_checkpoint(rc.checkpoint);
    auto expected = params.config();
    if (app.count("--depth") > 0 || app.count("--base-channels") > 0) expected.architecture = Architecture::unet;
    if (app.count("--depth") > 0) expected.depth = rc.depth;
    if (app.count("--base-channels") > 0) expected.base_channels = rc.base_channels;
    check_schema(expected, params);
    return params;
}

int cmd_eval(const RunConfig& rc, const CLI::App& app, std::ostream& out, std::ostream& err) {
    const auto params = load_model(rc, app);
    auto splits = split_of(rc, load_scenes(rc, err));
    std::vector<SceneRecord> scenes;
    if (rc.split_part == "test") {
        scenes = std::move(splits.test);
    } else if (rc.split_part == "val") {
        scenes = std::move(splits.val);
    } else if (rc.split_part == "train") {
        scenes = std::move(splits.train);
    } else if (rc.split_part == "all") {
        for (auto* part : {&splits.train, &splits.val, &splits.test})
            for (auto& s : *part) scenes.push_back(std::move(s));
    } else {
        throw UsageError("--split-part must be train, val, test or all");
    }
    if (scenes.empty()) throw ConfigError("no scenes in the '" + rc.split_part + "' split");

    EvalOptions opt;
    opt.adapt = adapt_of(rc);
    opt.loss.lambda = rc.lambda;
    opt.modes = eval_modes_of(rc);
    opt.threads = rc.threads;
    std::unique_ptr<LabelProvider> pseudo;
    if (std::find(opt.modes.begin(), opt.modes.end(), EvalMode::adapt_pseudo) != opt.modes.end()) {
        pseudo = make_label_provider(LabelScheme::file_pseudo, rc.labels_dir, preprocess_of(rc));
        opt.pseudo_labels = pseudo.get();
    }
    std::filesystem::create_directories(rc.out);
    if (rc.previews) {
        const auto dir = rc.out / "previews";
        std::filesystem::create_directories(dir);
        opt.sink = [dir](const SceneRecord& scene, Exposure ev, ReportRow row, const Image& pred) {
            if (row == ReportRow::ldr_no_recon) {
                write_png(dir / preview_name(scene.scene_id, ev, "ldr"), pred);
                write_png(dir / preview_name(scene.scene_id, ev, "truth"), display_preview(scene.hdr_normalized));
            } else {
                write_png(dir / preview_name(scene.scene_id, ev, row_name(row)), display_preview(pred));
            }
        };
    }

    const auto report = evaluate(params, scenes, opt);
    {
        std::ofstream os(rc.out / "metrics_summary.csv");
        report.write_summary_csv(os);
    }
    {
        std::ofstream os(rc.out / "metrics_detail.csv");
        report.write_detail_csv(os);
    }
    if (!report.skipped().empty()) {
        std::ostringstream os;
        os << "scene_id,mode,reason\n";
        for (const auto& s : report.skipped()) {
            err << "skipped " << s.scene_id << " (" << row_name(s.row) << "): " << s.reason << '\n';
            std::string reason = s.reason;
            std::replace(reason.begin(), reason.end(), ',', ';');
            std::replace(reason.begin(), reason.end(), '\n', ' ');
            os << s.scene_id << ',' << row_name(s.row) << ',' << reason << '\n';
        }
        write_file(rc.out / "skipped.csv", os.str());
    }
    out << scenes.size() << " scenes\n";
    for (const auto& s : report.summaries()) {
        out << row_name(s.row) << ": ssim " << fmt("%.4f", s.mean_ssim) << " psnr " << fmt("%.3f", s.mean_psnr_db)
            << " dB (" << s.count << " items";
        if (s.infinite_psnr) out << ", " << s.infinite_psnr << " infinite";
        out << ")\n";
    }
    return 0;
}

int cmd_adapt(const RunConfig& rc, const CLI::App& app, std::ostream& out) {
    const auto params = load_model(rc, app);
    if (rc.scene.empty()) throw UsageError("--scene is required");
    const auto holdout = parse_exposure(rc.holdout);
    if (!holdout) throw UsageError("--holdout must be -2, 0 or +2, got " + rc.holdout);
    const auto pre = preprocess_of(rc);
    auto files = read_scene_files(rc.scene, pre);

    SceneRecord scene;
    scene.scene_id = files.scene_id;
    std::vector<Exposure> support;
    for (auto ev : kExposures) {
        auto& img = files.ldr[static_cast<std::size_t>(ev)];
        if (!img) continue;
        scene.ldr[static_cast<std::size_t>(ev)] = std::move(*img);
        if (ev != *holdout) support.push_back(ev);
    }
    if (scene.ldr_at(*holdout).empty()) {
        throw UsageError("scene has no " + std::string(ev_tag(*holdout)) + ".png to reconstruct");
    }
    if (support.size() < 2) {
        throw UsageError("adaptation needs two support exposures besides the held-out one; found " +
                         std::to_string(support.size()));
    }
    if (files.hdr) {
        auto norm = normalize_hdr(*files.hdr);
        scene.hdr = std::move(*files.hdr);
        scene.hdr_scale = norm.scale;
        scene.hdr_normalized = std::move(norm.image);
    }

    std::unique_ptr<LabelProvider> labels;
    if (!rc.labels_dir.empty()) {
        labels = make_label_provider(LabelScheme::file_pseudo, rc.labels_dir, pre);
    } else if (files.hdr) {
        labels = std::make_unique<TrueHdrLabels>();
    } else {
        throw UsageError("no labels: the scene has no gt.hdr and --labels-dir was not given");
    }

    Task task;
    task.scene_id = scene.scene_id;
    task.label_scheme = labels->scheme();
    task.query = {*holdout, scene.ldr_at(*holdout), scene.hdr_normalized.empty() ? scene.ldr_at(*holdout)
                                                                                 : scene.hdr_normalized};
    for (auto ev : support) task.support.push_back({ev, scene.ldr_at(ev), labels->label(scene, ev)});
    task.validate();

    LossConfig loss;
    loss.lambda = rc.lambda;
    AdaptConfig acfg = adapt_of(rc);
    acfg.mode = MetaMode::first_order;
    const auto phi = adapt(params, task, acfg, loss).detach();
    const auto pred = predict(phi, task.query.ldr);

    std::filesystem::create_directories(rc.out);
    const auto stem = scene.scene_id + "_" + std::string(ev_tag(*holdout));
    write_rgbe_file(rc.out / (stem + ".hdr"), pred);
    write_png(rc.out / (stem + "_preview.png"), display_preview(pred));
    out << "wrote " << (rc.out / (stem + ".hdr")).string() << '\n';
    if (!scene.hdr_normalized.empty()) {
        out << "ssim " << fmt("%.4f", ssim(pred, scene.hdr_normalized)) << " psnr "
            << fmt("%.3f", psnr(pred, scene.hdr_normalized)) << " dB\n";
    }
    return 0;
}

int cmd_gradcheck(std::ostream& out) {
    const auto report = run_gradcheck(GradcheckOptions{}, &out);
    std::size_t failed = 0;
    for (const auto& c : report.checks)
        if (!c.passed()) ++failed;
    out << report.categories().size() << " categories, " << report.checks.size() << " checks, " << failed
        << " failed\n";
    if (failed) {
        for (const auto& c : report.checks)
            if (!c.passed()) out << "FAILED [" << c.category << "] " << c.name << '\n';
        return 1;
    }
    return 0;
}

int cmd_simulate(const RunConfig& rc, std::ostream& out) {
    if (rc.synthetic) {
        for (const auto& scene : synth_scenes(rc.synth_seed, rc.synth_scenes, rc.synth_size)) {
            save_scene(rc.out / scene.scene_id, scene);
        }
        out << "wrote " << rc.synth_scenes << " scenes under " << rc.out.string() << '\n';
        return 0;
    }
    if (rc.input.empty()) throw UsageError("simulate needs --input <file.hdr> or --synthetic");
    ExposureSimConfig sim{rc.low_percentile, rc.high_percentile, rc.gamma};
    const auto hdr = preprocess_image(read_rgbe_file(rc.input), preprocess_of(rc));
    std::filesystem::create_directories(rc.out);
    const auto path = rc.out / (rc.input.stem().string() + "_sim.png");
    write_png(path, simulate_exposure(hdr, sim));
    out << "wrote " << path.string() << '\n';
    return 0;
}

void add_options(CLI::App& app, RunConfig& rc) {
    app.set_config("--config", "", "key=value file; keys are flag names without dashes");
    app.allow_config_extras(CLI::config_extras_mode::error);

    app.add_option("--dataset", rc.dataset, "Dataset root (<root>/<scene>/{ev-2,ev0,ev+2}.png, gt.hdr)");
    app.add_option("--out", rc.out, "Output directory")->capture_default_str();
    app.add_option("--seed", rc.seed, "Seed for init, split and task sampling")->capture_default_str();

    app.add_option("--depth", rc.depth, "UNet contracting levels")->capture_default_str();
    app.add_option("--base-channels", rc.base_channels, "Channels after the first block")->capture_default_str();
    app.add_option("--bn-eps", rc.bn_eps, "Batch-norm epsilon")->capture_default_str();

    app.add_option("--iterations", rc.iterations, "Meta-iterations")->capture_default_str();
    app.add_option("--meta-batch", rc.meta_batch, "Tasks per meta-iteration")->capture_default_str();
    app.add_option("--outer-lr", rc.outer_lr, "Meta learning rate")->capture_default_str();
    app.add_option("--optimizer", rc.optimizer, "adam or sgd")->capture_default_str();
    app.add_option("--val-every", rc.val_every, "Validate every N iterations (0: never)")->capture_default_str();

    app.add_option("--alpha", rc.alpha, "Adaptation learning rate")->capture_default_str();
    app.add_option("--steps", rc.steps, "Adaptation steps")->capture_default_str();
    app.add_option("--mode", rc.mode, "so (second order) or fo (first order)")->capture_default_str();
    app.add_option("--lambda", rc.lambda, "Weight of the cosine term")->capture_default_str();

    app.add_option("--crop", rc.crop, "Center crop edge (0: none)")->capture_default_str();
    app.add_option("--downscale", rc.downscale, "Integer box downscale after cropping")->capture_default_str();
    app.add_option("--split", rc.split, "train,val,test fractions")->delimiter(',')->expected(3)->capture_default_str();
    app.add_option("--split-part", rc.split_part, "Scenes scored by eval: train, val, test or all")
        ->capture_default_str();

    app.add_option("--label-scheme", rc.label_scheme, "Support labels for training: true_hdr, file_pseudo, identity")
        ->capture_default_str();
    app.add_option("--labels-dir", rc.labels_dir, "Pseudo-label root (<dir>/<scene>/<ev>.hdr|.png)");
    app.add_option("--eval-mode", rc.eval_mode, "all, single_shot, adapt_true_hdr or adapt_pseudo")
        ->capture_default_str();

    app.add_flag("--synthetic", rc.synthetic, "Use generated scenes instead of --dataset");
    app.add_option("--synth-scenes", rc.synth_scenes, "Number of generated scenes")->capture_default_str();
    app.add_option("--synth-size", rc.synth_size, "Edge of generated scenes")->capture_default_str();
    app.add_option("--synth-seed", rc.synth_seed, "Seed of the first generated scene")->capture_default_str();

    app.add_option("--threads", rc.threads, "Worker threads")->capture_default_str();
    app.add_option("--checkpoint", rc.checkpoint, "Parameter file for eval and adapt");
    app.add_option("--scene", rc.scene, "Scene directory for adapt");
    app.add_option("--holdout", rc.holdout, "Exposure to reconstruct in adapt: -2, 0 or +2")->capture_default_str();
    app.add_flag("--previews", rc.previews, "Write PNG previews during eval");

    app.add_option("--input", rc.input, "Radiance .hdr file for simulate");
    app.add_option("--low", rc.low_percentile, "Lower clamp percentile for simulate")->capture_default_str();
    app.add_option("--high", rc.high_percentile, "Upper clamp percentile for simulate")->capture_default_str();
    app.add_option("--gamma", rc.gamma, "Gamma for simulate")->capture_default_str();
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Meta-learned LDR to HDR reconstruction"};
    app.fallthrough();
    app.require_subcommand(1);
    RunConfig rc;
    add_options(app, rc);
    auto* train = app.add_subcommand("train", "Meta-train and write checkpoints, history and manifest");
    auto* eval = app.add_subcommand("eval", "Score a checkpoint (SSIM/PSNR table)");
    auto* adapt = app.add_subcommand("adapt", "Adapt to one scene and reconstruct a held-out exposure");
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    auto* simulate = app.add_subcommand("simulate", "Simulate an exposure from an .hdr, or write synthetic scenes");
    for (auto* sub : {train, eval, adapt, gradcheck, simulate}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(rc, out, err);
        if (*eval) return cmd_eval(rc, app, out, err);
        if (*adapt) return cmd_adapt(rc, app, out);
        if (*gradcheck) return cmd_gradcheck(out);
        return cmd_simulate(rc, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace metahdr::cli
