#pragma once

// Scene ingestion, HDR normalization, exposure simulation, dataset splits
// and a synthetic scene generator.
//
// Dataset layout:  <root>/<scene_id>/{ev-2.png, ev0.png, ev+2.png, gt.hdr}

#include "metahdr/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metahdr {

enum class Exposure { minus2 = 0, zero = 1, plus2 = 2 };

inline constexpr std::array<Exposure, 3> kExposures{Exposure::minus2, Exposure::zero, Exposure::plus2};

/// -2, 0 or +2.
int ev_value(Exposure ev);
/// File stem: "ev-2", "ev0" or "ev+2".
std::string_view ev_tag(Exposure ev);
/// Accepts "-2", "0", "+2", "2" and the file stems.
std::optional<Exposure> parse_exposure(std::string_view text);

struct SceneRecord {
    std::string scene_id;
    /// Indexed by Exposure; 3 x H x W in [0, 1].
    std::array<Image, 3> ldr;
    /// Linear radiance, >= 0.
    Image hdr;
    float hdr_scale = 1.0f;
    /// min(hdr / hdr_scale, 1); the regression target.
    Image hdr_normalized;

    const Image& ldr_at(Exposure ev) const { return ldr[static_cast<std::size_t>(ev)]; }

    /// Throws SceneError if sizes disagree or values leave their ranges.
    void validate() const;
};

struct Preprocess {
    /// Square center crop edge; 0 disables cropping.
    int crop = 512;
    /// Integer box-filter factor applied after cropping.
    int downscale = 1;
};

/// Square crop at offset floor((dim - size) / 2) on each axis.
Image center_crop(const Image& image, int size);
/// Averages factor x factor blocks. Dims must be divisible by factor.
Image downscale_box(const Image& image, int factor);
Image preprocess_image(const Image& image, const Preprocess& pre);

/// Nearest-rank percentile (rank = ceil(p/100 * n), at least 1) of `values`.
double percentile_nearest_rank(std::vector<float> values, double p);

struct NormalizedHdr {
    Image image;
    float scale = 1.0f;
};

/// scale = 99.9th nearest-rank percentile of all channel values; image =
/// min(hdr / scale, 1). Throws SceneError when the scale is not positive.
NormalizedHdr normalize_hdr(const Image& hdr);

struct ExposureSimConfig {
    double low_percentile = 1.0;
    double high_percentile = 99.0;
    double gamma = 2.2;

    void validate() const;
};

/// Percentile clamp, linear rescale to [0, 1], then ^(1/gamma).
/// Throws SceneError when the two percentiles coincide.
Image simulate_exposure(const Image& hdr, const ExposureSimConfig& cfg);

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SceneSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Seeded shuffle, then val and test sizes are floor(fraction * n) and the
/// remainder goes to train.
SceneSplit split_scenes(std::vector<std::string> scene_ids, const SplitSpec& spec);

/// Smooth random radiance field (2-4 coloured Gaussian bumps with peaks in
/// [1, 50] over a dim ambient floor) and three LDR renderings through
/// per-scene percentile windows, one per exposure.
SceneRecord synth_scene(std::uint64_t seed, int size);

/// `count` synthetic scenes with seeds first_seed, first_seed + 1, ...
std::vector<SceneRecord> synth_scenes(std::uint64_t first_seed, int count, int size);

/// Whatever exposures and reference a scene directory holds.
struct SceneFiles {
    std::string scene_id;
    std::array<std::optional<Image>, 3> ldr;
    std::optional<Image> hdr;
};

/// Reads the files present in a scene directory (after preprocessing).
SceneFiles read_scene_files(const std::filesystem::path& dir, const Preprocess& pre);

/// Requires all three exposures and gt.hdr. Throws SceneError naming the
/// offending files.
SceneRecord load_scene(const std::filesystem::path& dir, const Preprocess& pre);

/// Writes <dir>/{ev-2.png, ev0.png, ev+2.png, gt.hdr}, creating `dir`.
/// The PNGs are 8-bit, so a reload quantizes the LDR images.
void save_scene(const std::filesystem::path& dir, const SceneRecord& scene);

struct DatasetLoad {
    std::vector<SceneRecord> scenes;
    /// (scene_id, reason) for directories that were skipped.
    std::vector<std::pair<std::string, std::string>> skipped;
};

/// Loads every scene directory under `root`, sorted by scene id.
DatasetLoad load_dataset(const std::filesystem::path& root, const Preprocess& pre);

}  // namespace metahdr
