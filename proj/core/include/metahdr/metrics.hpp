#pragma once

// Image quality metrics and the evaluation report built from them.

#include "metahdr/image.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metahdr {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// Single-scale SSIM over all fully contained Gaussian windows ("valid"
/// region), computed per channel and averaged across channels.
/// Throws DimensionError if the images differ in size or are smaller than the window.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// 10 log10(peak^2 / mse); +infinity when mse == 0.
double psnr_from_mse(double mse, double peak = 1.0);
double mean_squared_error(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Infinite PSNR entries enter report means at this value and are counted separately.
inline constexpr double kPsnrCapDb = 100.0;

/// Row labels of the evaluation table. The set is fixed so CSV consumers can
/// rely on it.
enum class ReportRow { ldr_no_recon, single_shot, adapt_true_hdr, adapt_pseudo };

std::string_view row_name(ReportRow row);
std::optional<ReportRow> parse_row(std::string_view name);

struct MetricItem {
    std::string scene_id;
    int holdout_ev = 0;
    ReportRow row = ReportRow::single_shot;
    double ssim = 0.0;
    double psnr_db = 0.0;
};

struct SkippedScene {
    std::string scene_id;
    ReportRow row = ReportRow::single_shot;
    std::string reason;
};

struct RowSummary {
    ReportRow row = ReportRow::single_shot;
    std::size_t count = 0;
    double mean_ssim = 0.0;
    double mean_psnr_db = 0.0;
    std::size_t infinite_psnr = 0;
};

class MetricReport {
public:
    void add(MetricItem item) { items_.push_back(std::move(item)); }
    void skip(SkippedScene scene) { skipped_.push_back(std::move(scene)); }
    void merge(const MetricReport& other);

    const std::vector<MetricItem>& items() const { return items_; }
    const std::vector<SkippedScene>& skipped() const { return skipped_; }

    std::optional<RowSummary> summary(ReportRow row) const;
    /// Summaries for every row present, in enumeration order.
    std::vector<RowSummary> summaries() const;

    /// Columns: scene_id,holdout_ev,mode,ssim,psnr_db
    void write_detail_csv(std::ostream& os) const;
    /// Columns: mode,count,ssim,psnr_db,infinite_psnr
    void write_summary_csv(std::ostream& os) const;

private:
    std::vector<MetricItem> items_;
    std::vector<SkippedScene> skipped_;
};

}  // namespace metahdr
