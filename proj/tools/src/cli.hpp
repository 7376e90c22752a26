#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace metahdr::cli {

/// Every setting the subcommands read. Flags and config-file keys share
/// names: `--outer-lr 0.01` on the command line is `outer-lr = 0.01` in a file.
struct RunConfig {
    std::filesystem::path dataset;
    std::filesystem::path out = "metahdr-out";
    std::uint64_t seed = 0;

    int depth = 4;
    int base_channels = 32;
    double bn_eps = 1e-5;

    int iterations = 200;
    int meta_batch = 5;
    double outer_lr = 0.005;
    std::string optimizer = "adam";
    int val_every = 10;

    double alpha = 0.01;
    int steps = 3;
    std::string mode = "so";
    double lambda = 5.0;

    int crop = 512;
    int downscale = 1;
    std::vector<double> split{0.8, 0.1, 0.1};
    std::string split_part = "test";

    std::string label_scheme = "true_hdr";
    std::filesystem::path labels_dir;
    std::string eval_mode = "all";

    bool synthetic = false;
    int synth_scenes = 60;
    int synth_size = 64;
    std::uint64_t synth_seed = 1;

    int threads = 1;
    std::filesystem::path checkpoint;
    std::filesystem::path scene;
    std::string holdout = "0";
    bool previews = false;

    std::filesystem::path input;
    double low_percentile = 1.0;
    double high_percentile = 99.0;
    double gamma = 2.2;
};

/// Exit codes: 0 success, 1 runtime failure (or failed gradient check),
/// 2 usage or configuration error.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace metahdr::cli
