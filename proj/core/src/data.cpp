#include "metahdr/data.hpp"

#include "metahdr/errors.hpp"
#include "metahdr/png_io.hpp"
#include "metahdr/rgbe.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace metahdr {

int ev_value(Exposure ev) { return 2 * static_cast<int>(ev) - 2; }

std::string_view ev_tag(Exposure ev) {
    switch (ev) {
        case Exposure::minus2: return "ev-2";
        case Exposure::zero: return "ev0";
        default: return "ev+2";
    }
}

std::optional<Exposure> parse_exposure(std::string_view text) {
    if (text == "-2" || text == "ev-2") return Exposure::minus2;
    if (text == "0" || text == "ev0") return Exposure::zero;
    if (text == "+2" || text == "2" || text == "ev+2") return Exposure::plus2;
    return std::nullopt;
}

void SceneRecord::validate() const {
    auto fail = [this](const std::string& why) { throw SceneError("scene " + scene_id + ": " + why); };
    if (hdr.channels != 3 || hdr.empty()) fail("HDR reference must be a non-empty 3-channel image");
    if (!hdr.same_dims(hdr_normalized)) fail("normalized HDR differs in size from HDR");
    for (auto ev : kExposures) {
        const auto& img = ldr_at(ev);
        if (!img.same_dims(hdr)) fail(std::string(ev_tag(ev)) + " differs in size from the HDR reference");
        for (float v : img.data)
            if (!(v >= 0.0f && v <= 1.0f)) fail(std::string(ev_tag(ev)) + " has values outside [0, 1]");
    }
    if (!(hdr_scale > 0.0f)) fail("hdr_scale must be positive");
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < hdr.data.size(); ++i) {
        if (!(hdr.data[i] >= 0.0f)) fail("HDR has negative or non-finite values");
        const float v = hdr_normalized.data[i];
        if (!(v >= 0.0f && v <= 1.0f)) fail("normalized HDR has values outside [0, 1]");
        if (hdr.data[i] / hdr_scale > 1.0f) ++clipped;
    }
    if (static_cast<double>(clipped) > 0.001 * static_cast<double>(hdr.data.size())) {
        fail("normalization clips more than 0.1% of values");
    }
}

Image center_crop(const Image& image, int size) {
    if (size <= 0 || size > image.height || size > image.width) {
        throw DimensionError("center_crop: size " + std::to_string(size) + " does not fit a " +
                             std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
    }
    const int oy = (image.height - size) / 2, ox = (image.width - size) / 2;
    Image out(image.channels, size, size);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out.at(c, y, x) = image.at(c, y + oy, x + ox);
    return out;
}

Image downscale_box(const Image& image, int factor) {
    if (factor < 1 || image.height % factor != 0 || image.width % factor != 0) {
        throw DimensionError("downscale_box: factor " + std::to_string(factor) + " does not divide " +
                             std::to_string(image.height) + "x" + std::to_string(image.width));
    }
    if (factor == 1) return image;
    Image out(image.channels, image.height / factor, image.width / factor);
    const double inv = 1.0 / (factor * factor);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double s = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) s += image.at(c, y * factor + dy, x * factor + dx);
                out.at(c, y, x) = static_cast<float>(s * inv);
            }
    return out;
}

Image preprocess_image(const Image& image, const Preprocess& pre) {
    const Image cropped = pre.crop > 0 ? center_crop(image, pre.crop) : image;
    return downscale_box(cropped, pre.downscale);
}

double percentile_nearest_rank(std::vector<float> values, double p) {
    if (values.empty()) throw DimensionError("percentile of an empty set");
    if (!(p >= 0.0 && p <= 100.0)) throw ConfigError("percentile must be in [0, 100]");
    const auto n = values.size();
    // The small tolerance keeps ranks such as 99.9% of 1000 from rounding up.
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(values.begin(), nth, values.end());
    return *nth;
}

NormalizedHdr normalize_hdr(const Image& hdr) {
    const double scale = percentile_nearest_rank(hdr.data, 99.9);
    if (!(scale > 0.0)) {
        throw SceneError("degenerate HDR image: 99.9th percentile is " + std::to_string(scale));
    }
    NormalizedHdr out{hdr, static_cast<float>(scale)};
    for (auto& v : out.image.data) v = std::min(v / out.scale, 1.0f);
    return out;
}

void ExposureSimConfig::validate() const {
    if (!(low_percentile >= 0.0 && low_percentile < high_percentile && high_percentile < 100.0)) {
        throw ConfigError("exposure simulation needs 0 <= low < high < 100");
    }
    if (!(gamma > 0.0)) throw ConfigError("exposure simulation gamma must be positive");
}

Image simulate_exposure(const Image& hdr, const ExposureSimConfig& cfg) {
    cfg.validate();
    const double lo = percentile_nearest_rank(hdr.data, cfg.low_percentile);
    const double hi = percentile_nearest_rank(hdr.data, cfg.high_percentile);
    if (!(hi > lo)) {
        throw SceneError("degenerate HDR image: percentiles " + std::to_string(cfg.low_percentile) + " and " +
                         std::to_string(cfg.high_percentile) + " coincide");
    }
    Image out = hdr;
    const double inv_gamma = 1.0 / cfg.gamma;
    for (auto& v : out.data) {
        const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
        v = static_cast<float>(std::pow(t, inv_gamma));
    }
    return out;
}

void SplitSpec::validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0 || std::abs(train + val + test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be non-negative and sum to 1");
    }
}

SceneSplit split_scenes(std::vector<std::string> scene_ids, const SplitSpec& spec) {
    spec.validate();
    if (scene_ids.size() < 3) {
        throw ConfigError("need at least 3 scenes to split, got " + std::to_string(scene_ids.size()));
    }
    std::mt19937_64 rng(spec.seed);
    std::shuffle(scene_ids.begin(), scene_ids.end(), rng);
    const double n = static_cast<double>(scene_ids.size());
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(spec.test * n + 1e-9));
    SceneSplit out;
    auto it = scene_ids.begin();
    out.test.assign(it, it + static_cast<std::ptrdiff_t>(n_test));
    it += static_cast<std::ptrdiff_t>(n_test);
    out.val.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    out.train.assign(it, scene_ids.end());
    return out;
}

SceneRecord synth_scene(std::uint64_t seed, int size) {
    if (size < 2) throw ConfigError("synthetic scene size must be >= 2");
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    Image hdr(3, size, size);
    std::array<double, 3> ambient{};
    for (auto& a : ambient) a = uniform(0.02, 0.2);
    struct Bump {
        double cx, cy, sigma, peak;
        std::array<double, 3> colour;
    };
    std::vector<Bump> bumps(static_cast<std::size_t>(std::uniform_int_distribution<int>(2, 4)(rng)));
    for (auto& b : bumps) {
        b.cx = uniform(0.0, size);
        b.cy = uniform(0.0, size);
        b.sigma = uniform(size / 10.0, size / 3.0);
        b.peak = uniform(1.0, 50.0);
        for (auto& c : b.colour) c = uniform(0.3, 1.0);
        const double top = std::max({b.colour[0], b.colour[1], b.colour[2]});
        for (auto& c : b.colour) c /= top;
    }
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = ambient[static_cast<std::size_t>(c)];
                for (const auto& b : bumps) {
                    const double d2 = (x + 0.5 - b.cx) * (x + 0.5 - b.cx) + (y + 0.5 - b.cy) * (y + 0.5 - b.cy);
                    v += b.peak * b.colour[static_cast<std::size_t>(c)] * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
                }
                hdr.at(c, y, x) = static_cast<float>(v);
            }

    // Brighter exposures clip more highlights and lift shadows; darker ones
    // keep highlights and crush shadows.
    const double mid_hi = uniform(85.0, 95.0);
    const std::array<ExposureSimConfig, 3> windows{{
        {uniform(10.0, 30.0), uniform(99.0, 99.9), 2.2},
        {uniform(0.5, 5.0), mid_hi, 2.2},
        {uniform(0.0, 0.5), mid_hi - uniform(20.0, 35.0), 2.2},
    }};

    SceneRecord rec;
    rec.scene_id = "synth-" + std::to_string(seed);
    for (auto ev : kExposures) {
        rec.ldr[static_cast<std::size_t>(ev)] = simulate_exposure(hdr, windows[static_cast<std::size_t>(ev)]);
    }
    auto norm = normalize_hdr(hdr);
    rec.hdr = std::move(hdr);
    rec.hdr_scale = norm.scale;
    rec.hdr_normalized = std::move(norm.image);
    return rec;
}

std::vector<SceneRecord> synth_scenes(std::uint64_t first_seed, int count, int size) {
    std::vector<SceneRecord> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) out.push_back(synth_scene(first_seed + static_cast<std::uint64_t>(i), size));
    return out;
}

SceneFiles read_scene_files(const std::filesystem::path& dir, const Preprocess& pre) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw SceneError("not a scene directory: " + dir.string());
    SceneFiles files;
    files.scene_id = dir.filename().string();
    auto load = [&pre](const fs::path& path, auto reader) {
        try {
            return preprocess_image(reader(path), pre);
        } catch (const Error& e) {
            throw SceneError(path.string() + ": " + e.what());
        }
    };
    for (auto ev : kExposures) {
        const auto path = dir / (std::string(ev_tag(ev)) + ".png");
        if (fs::exists(path)) files.ldr[static_cast<std::size_t>(ev)] = load(path, read_png);
    }
    const auto hdr_path = dir / "gt.hdr";
    if (fs::exists(hdr_path)) files.hdr = load(hdr_path, read_rgbe_file);
    return files;
}

SceneRecord load_scene(const std::filesystem::path& dir, const Preprocess& pre) {
    auto files = read_scene_files(dir, pre);
    std::string missing;
    for (auto ev : kExposures)
        if (!files.ldr[static_cast<std::size_t>(ev)]) missing += " " + std::string(ev_tag(ev)) + ".png";
    if (!files.hdr) missing += " gt.hdr";
    if (!missing.empty()) throw SceneError("scene " + files.scene_id + " is missing" + missing);

    SceneRecord rec;
    rec.scene_id = files.scene_id;
    rec.hdr = std::move(*files.hdr);
    for (auto ev : kExposures) {
        auto& img = *files.ldr[static_cast<std::size_t>(ev)];
        if (img.height != rec.hdr.height || img.width != rec.hdr.width) {
            throw SceneError("scene " + rec.scene_id + ": " + std::string(ev_tag(ev)) + ".png is " +
                             std::to_string(img.width) + "x" + std::to_string(img.height) + " but gt.hdr is " +
                             std::to_string(rec.hdr.width) + "x" + std::to_string(rec.hdr.height));
        }
        rec.ldr[static_cast<std::size_t>(ev)] = std::move(img);
    }
    auto norm = normalize_hdr(rec.hdr);
    rec.hdr_scale = norm.scale;
    rec.hdr_normalized = std::move(norm.image);
    rec.validate();
    return rec;
}

void save_scene(const std::filesystem::path& dir, const SceneRecord& scene) {
    std::filesystem::create_directories(dir);
    for (auto ev : kExposures) write_png(dir / (std::string(ev_tag(ev)) + ".png"), scene.ldr_at(ev));
    write_rgbe_file(dir / "gt.hdr", scene.hdr);
}

DatasetLoad load_dataset(const std::filesystem::path& root, const Preprocess& pre) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw ConfigError("dataset root is not a directory: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    DatasetLoad out;
    for (const auto& dir : dirs) {
        try {
            out.scenes.push_back(load_scene(dir, pre));
        } catch (const Error& e) {
            out.skipped.emplace_back(dir.filename().string(), e.what());
        }
    }
    return out;
}

}  // namespace metahdr
