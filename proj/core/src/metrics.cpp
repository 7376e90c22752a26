#include "metahdr/metrics.hpp"

#include "metahdr/errors.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace metahdr {

namespace {

void require_same_dims(const char* what, const Image& a, const Image& b) {
    if (!a.same_dims(b)) {
        throw DimensionError(std::string(what) + ": image sizes differ (" + std::to_string(a.channels) + "x" +
                             std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                             std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                             std::to_string(b.width) + ")");
    }
}

std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double center = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - center;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= total;
    return w;
}

// Separable "valid" filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int wo = w - n + 1, ho = h - n + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * wo);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += k[static_cast<std::size_t>(t)] * plane[static_cast<std::size_t>(y) * w + x + t];
            rows[static_cast<std::size_t>(y) * wo + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ho) * wo);
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += k[static_cast<std::size_t>(t)] * rows[static_cast<std::size_t>(y + t) * wo + x];
            out[static_cast<std::size_t>(y) * wo + x] = s;
        }
    return out;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& params) {
    require_same_dims("ssim", a, b);
    if (a.height < params.window || a.width < params.window) {
        throw DimensionError("ssim: images of " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                             " are smaller than the " + std::to_string(params.window) + "x" +
                             std::to_string(params.window) + " window");
    }
    const auto k = gaussian_window(params.window, params.sigma);
    const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
    const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
    const int h = a.height, w = a.width;
    const std::size_t plane = a.pixels();

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = a.data[c * plane + i];
            y[i] = b.data[c * plane + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
        const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
        double channel = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            channel += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
                       ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += channel / static_cast<double>(mx.size());
    }
    return total / a.channels;
}

double mean_squared_error(const Image& a, const Image& b) {
    require_same_dims("mse", a, b);
    if (a.data.empty()) throw DimensionError("mse: empty images");
    double total = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - b.data[i];
        total += d * d;
    }
    return total / static_cast<double>(a.data.size());
}

double psnr_from_mse(double mse, double peak) {
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const Image& a, const Image& b, double peak) { return psnr_from_mse(mean_squared_error(a, b), peak); }

namespace {
constexpr std::array<std::string_view, 4> kRowNames{"ldr_no_recon", "single_shot", "adapt_true_hdr", "adapt_pseudo"};
}

std::string_view row_name(ReportRow row) { return kRowNames[static_cast<std::size_t>(row)]; }

std::optional<ReportRow> parse_row(std::string_view name) {
    for (std::size_t i = 0; i < kRowNames.size(); ++i)
        if (kRowNames[i] == name) return static_cast<ReportRow>(i);
    return std::nullopt;
}

void MetricReport::merge(const MetricReport& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
    skipped_.insert(skipped_.end(), other.skipped_.begin(), other.skipped_.end());
}

std::optional<RowSummary> MetricReport::summary(ReportRow row) const {
    RowSummary s;
    s.row = row;
    for (const auto& item : items_) {
        if (item.row != row) continue;
        ++s.count;
        s.mean_ssim += item.ssim;
        if (std::isinf(item.psnr_db)) {
            ++s.infinite_psnr;
            s.mean_psnr_db += kPsnrCapDb;
        } else {
            s.mean_psnr_db += item.psnr_db;
        }
    }
    if (s.count == 0) return std::nullopt;
    s.mean_ssim /= static_cast<double>(s.count);
    s.mean_psnr_db /= static_cast<double>(s.count);
    return s;
}

std::vector<RowSummary> MetricReport::summaries() const {
    std::vector<RowSummary> out;
    for (std::size_t i = 0; i < kRowNames.size(); ++i)
        if (auto s = summary(static_cast<ReportRow>(i))) out.push_back(*s);
    return out;
}

void MetricReport::write_detail_csv(std::ostream& os) const {
    os << "scene_id,holdout_ev,mode,ssim,psnr_db\n";
    for (const auto& item : items_) {
        os << item.scene_id << ',' << item.holdout_ev << ',' << row_name(item.row) << ','
           << format_double(item.ssim) << ',' << format_double(item.psnr_db) << '\n';
    }
}

void MetricReport::write_summary_csv(std::ostream& os) const {
    os << "mode,count,ssim,psnr_db,infinite_psnr\n";
    for (const auto& s : summaries()) {
        os << row_name(s.row) << ',' << s.count << ',' << format_double(s.mean_ssim) << ','
           << format_double(s.mean_psnr_db) << ',' << s.infinite_psnr << '\n';
    }
}

}  // namespace metahdr
