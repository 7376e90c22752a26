#include "cli.hpp"
#include "metahdr/data.hpp"
#include "metahdr/meta.hpp"
#include "metahdr/param_io.hpp"
#include "metahdr/rgbe.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace metahdr;

namespace {

struct Outcome {
    int code = 0;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "metahdr");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::vector<std::string> scenes_only(const std::filesystem::path& out) {
    return {"--synthetic", "--synth-scenes", "6", "--synth-size", "16", "--split", "0.5,0.25,0.25",
            "--meta-batch", "2", "--val-every", "1", "--out", out.string()};
}

std::vector<std::string> small_run(const std::filesystem::path& out) {
    auto a = scenes_only(out);
    a.insert(a.end(), {"--depth", "1", "--base-channels", "4"});
    return a;
}

std::vector<std::string> with(std::vector<std::string> a, std::initializer_list<std::string> more) {
    a.insert(a.end(), more);
    return a;
}

// mode -> "ssim,psnr_db" from metrics_summary.csv
std::map<std::string, std::string> summary_rows(const std::filesystem::path& csv) {
    std::istringstream is(test::slurp(csv));
    std::string line;
    std::getline(is, line);
    std::map<std::string, std::string> rows;
    while (std::getline(is, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
        rows[f.at(0)] = f.at(2) + "," + f.at(3);
    }
    return rows;
}

}  // namespace

TEST(Cli, NoSubcommandIsUsageError) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"--bogus", "train"}).code, 2);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, TrainZeroIterationsWritesArtifacts) {
    test::TempDir dir("cli-train0");
    const auto r = run_cli(with(small_run(dir.path()), {"--iterations", "0", "train"}));
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"init.mhp", "final.mhp", "best.mhp", "history.csv", "split.csv", "manifest.txt"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_EQ(test::slurp(dir / "history.csv"), "iteration,meta_loss,val_ssim\n");
    EXPECT_EQ(test::slurp(dir / "split.csv").substr(0, 14), "scene_id,part\n");
    const auto m = read_manifest(dir / "manifest.txt");
    EXPECT_NE(std::find(m.begin(), m.end(), std::pair<std::string, std::string>{"completed-iterations", "0"}),
              m.end());
}

TEST(Cli, TrainIsDeterministic) {
    test::TempDir a("cli-det-a"), b("cli-det-b");
    for (auto* d : {&a, &b}) {
        const auto r = run_cli(with(small_run(d->path()), {"--iterations", "2", "--seed", "4", "train"}));
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(test::slurp(a / "history.csv"), test::slurp(b / "history.csv"));
    EXPECT_EQ(test::slurp(a / "final.mhp"), test::slurp(b / "final.mhp"));
    EXPECT_EQ(test::slurp(a / "split.csv"), test::slurp(b / "split.csv"));
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
    test::TempDir dir("cli-config");
    {
        std::ofstream os(dir / "run.ini");
        os << "iterations = 1\nouter-lr = 0.5\nseed = 9\n";
    }
    auto r = run_cli(with(small_run(dir / "a"), {"--config", (dir / "run.ini").string(), "train"}));
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = read_manifest(dir / "a" / "manifest.txt");
    auto get = [&](const std::string& k) {
        for (const auto& [key, v] : m)
            if (key == k) return v;
        return std::string("<missing>");
    };
    EXPECT_EQ(get("outer-lr"), "0.5");
    EXPECT_EQ(get("seed"), "9");

    r = run_cli(with(small_run(dir / "b"),
                     {"--config", (dir / "run.ini").string(), "--outer-lr", "0.25", "train"}));
    ASSERT_EQ(r.code, 0) << r.err;
    m = read_manifest(dir / "b" / "manifest.txt");
    EXPECT_EQ(get("outer-lr"), "0.25");

    {
        std::ofstream os(dir / "bad.ini");
        os << "outer_lr = 0.5\n";
    }
    r = run_cli(with(small_run(dir / "c"), {"--config", (dir / "bad.ini").string(), "train"}));
    EXPECT_EQ(r.code, 2);
    r = run_cli(with(small_run(dir / "d"), {"--config", (dir / "missing.ini").string(), "train"}));
    EXPECT_EQ(r.code, 2);
}

TEST(Cli, InvalidSettingsAreUsageErrors) {
    test::TempDir dir("cli-invalid");
    EXPECT_EQ(run_cli(with(small_run(dir.path()), {"--mode", "xo", "train"})).code, 2);
    EXPECT_EQ(run_cli(with(small_run(dir.path()), {"--depth", "0", "train"})).code, 2);
    EXPECT_EQ(run_cli(with(small_run(dir.path()), {"--split", "0.5,0.5,0.5", "train"})).code, 2);
    EXPECT_EQ(run_cli({"--out", dir.path().string(), "train"}).code, 2);  // no dataset
    EXPECT_EQ(run_cli(with(small_run(dir.path()), {"eval"})).code, 2);  // no checkpoint
}

TEST(Cli, IdentityCheckpointSingleShotEqualsLdr) {
    test::TempDir dir("cli-identity");
    UNetConfig c;
    c.architecture = Architecture::identity;
    save_checkpoint(dir / "id.mhp", ParamSet<float>(c));
    const auto r = run_cli(with(scenes_only(dir / "eval"),
                                {"--checkpoint", (dir / "id.mhp").string(), "--split-part", "all", "eval"}));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = summary_rows(dir / "eval" / "metrics_summary.csv");
    ASSERT_TRUE(rows.count("ldr_no_recon") && rows.count("single_shot") && rows.count("adapt_true_hdr"));
    EXPECT_EQ(rows.at("single_shot"), rows.at("ldr_no_recon"));
    EXPECT_EQ(rows.at("adapt_true_hdr"), rows.at("ldr_no_recon"));
}

TEST(Cli, AlphaZeroAdaptEqualsSingleShot) {
    test::TempDir dir("cli-alpha0");
    ASSERT_EQ(run_cli(with(small_run(dir / "t"), {"--iterations", "0", "train"})).code, 0);
    const auto r = run_cli(with(small_run(dir / "e"), {"--checkpoint", (dir / "t" / "init.mhp").string(),
                                                      "--alpha", "0", "--previews", "eval"}));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = summary_rows(dir / "e" / "metrics_summary.csv");
    EXPECT_EQ(rows.at("adapt_true_hdr"), rows.at("single_shot"));
    EXPECT_NE(rows.at("single_shot"), rows.at("ldr_no_recon"));
    EXPECT_FALSE(std::filesystem::is_empty(dir / "e" / "previews"));
    EXPECT_NE(test::slurp(dir / "e" / "metrics_detail.csv").find("adapt_true_hdr"), std::string::npos);
}

TEST(Cli, SchemaMismatchIsUsageErrorNamingTensors) {
    test::TempDir dir("cli-schema");
    ASSERT_EQ(run_cli(with(small_run(dir / "t"), {"--iterations", "0", "train"})).code, 0);
    const auto r = run_cli(with(scenes_only(dir / "e"), {"--checkpoint", (dir / "t" / "init.mhp").string(),
                                                        "--base-channels", "8", "eval"}));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("down0.conv1.weight"), std::string::npos) << r.err;
}

TEST(Cli, SimulateAndAdapt) {
    test::TempDir dir("cli-adapt");
    ASSERT_EQ(run_cli({"--synthetic", "--synth-scenes", "1", "--synth-size", "16", "--synth-seed", "5", "--out",
                       (dir / "data").string(), "simulate"})
                  .code,
              0);
    const auto scene = synth_scenes(5, 1, 16).front();
    const auto scene_dir = dir / "data" / scene.scene_id;
    ASSERT_TRUE(std::filesystem::exists(scene_dir / "gt.hdr"));

    ASSERT_EQ(run_cli(with(small_run(dir / "t"), {"--iterations", "0", "train"})).code, 0);
    const auto ckpt = (dir / "t" / "init.mhp").string();
    auto adapt_args = [&](const std::string& holdout, const std::string& alpha) {
        return std::vector<std::string>{"--checkpoint", ckpt, "--scene", scene_dir.string(), "--crop", "0",
                                        "--holdout", holdout, "--alpha", alpha, "--out", (dir / "a").string(),
                                        "adapt"};
    };

    std::vector<std::string> outputs;
    for (const char* ev : {"-2", "0", "+2"}) {
        const auto r = run_cli(adapt_args(ev, "0.01"));
        ASSERT_EQ(r.code, 0) << r.err;
        EXPECT_NE(r.out.find("ssim "), std::string::npos);
        outputs.push_back(test::slurp(dir / "a" / (scene.scene_id + "_" + std::string(ev_tag(*parse_exposure(ev))) + ".hdr")));
    }
    EXPECT_NE(outputs[0], outputs[1]);
    EXPECT_NE(outputs[1], outputs[2]);
    EXPECT_NE(outputs[0], outputs[2]);

    // alpha = 0 reproduces the unadapted network up to RGBE quantization.
    ASSERT_EQ(run_cli(adapt_args("0", "0")).code, 0);
    const auto files = read_scene_files(scene_dir, Preprocess{0, 1});
    const auto expected = predict(load_checkpoint(ckpt), *files.ldr[static_cast<std::size_t>(Exposure::zero)]);
    const auto got = read_rgbe_file(dir / "a" / (scene.scene_id + "_" + std::string(ev_tag(Exposure::zero)) + ".hdr"));
    ASSERT_EQ(got.data.size(), expected.data.size());
    const auto px = std::size_t(expected.height) * expected.width;
    for (std::size_t p = 0; p < px; ++p) {
        float peak = 0.0f;
        for (int c = 0; c < 3; ++c) peak = std::max(peak, expected.data[c * px + p]);
        for (int c = 0; c < 3; ++c) EXPECT_LE(std::abs(got.data[c * px + p] - expected.data[c * px + p]), 0.01f * peak);
    }

    std::filesystem::remove(scene_dir / "ev+2.png");
    EXPECT_EQ(run_cli(adapt_args("0", "0.01")).code, 2);
}

TEST(Cli, SimulateFromHdr) {
    test::TempDir dir("cli-sim");
    const auto scene = synth_scenes(2, 1, 16).front();
    write_rgbe_file(dir / "scene.hdr", scene.hdr);
    const auto r = run_cli({"--input", (dir / "scene.hdr").string(), "--crop", "0", "--out",
                            (dir / "o").string(), "simulate"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "o" / "scene_sim.png"));
    EXPECT_EQ(run_cli({"--out", (dir / "o").string(), "simulate"}).code, 2);
}
