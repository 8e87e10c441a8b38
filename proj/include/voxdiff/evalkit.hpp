#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "voxdiff/error.hpp"
#include "voxdiff/random.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

inline constexpr std::array<const char*, 6> kMetricNames{"SSIM", "PSNR", "MAE",
                                                         "MSE",  "RMSE", "MSLE"};

struct MetricEntry {
  std::string subject;
  double ssim = 0.0;
  double psnr = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double msle = 0.0;

  std::array<double, 6> values() const { return {ssim, psnr, mae, mse, rmse, msle}; }
};

struct MetricConfig {
  std::size_t ssim_window = 7;  // odd edge length of the cubic window
  double psnr_cap = 100.0;
  double psnr_mse_floor = 1e-10;

  void validate() const {
    if (ssim_window == 0 || ssim_window % 2 == 0) {
      throw ConfigError("ssim_window must be a positive odd number");
    }
  }
};

namespace detail {

/// Inclusive-prefix sums over a 3D grid with a zero guard plane on each axis,
/// so box sums over any sub-cube take eight lookups.
class BoxSums {
 public:
  BoxSums(const Shape3& s, const std::vector<double>& v)
      : sx_(s.nx + 1), sy_(s.ny + 1), sum_((s.nx + 1) * (s.ny + 1) * (s.nz + 1), 0.0) {
    for (std::size_t k = 0; k < s.nz; ++k)
      for (std::size_t j = 0; j < s.ny; ++j)
        for (std::size_t i = 0; i < s.nx; ++i) {
          at(i + 1, j + 1, k + 1) = v[s.index(i, j, k)] + at(i, j + 1, k + 1) +
                                    at(i + 1, j, k + 1) + at(i + 1, j + 1, k) -
                                    at(i, j, k + 1) - at(i, j + 1, k) -
                                    at(i + 1, j, k) + at(i, j, k);
        }
  }

  /// Sum over [i0, i1) x [j0, j1) x [k0, k1).
  double box(std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1,
             std::size_t k0, std::size_t k1) const {
    return at(i1, j1, k1) - at(i0, j1, k1) - at(i1, j0, k1) - at(i1, j1, k0) +
           at(i0, j0, k1) + at(i0, j1, k0) + at(i1, j0, k0) - at(i0, j0, k0);
  }

 private:
  double& at(std::size_t i, std::size_t j, std::size_t k) { return sum_[i + sx_ * (j + sy_ * k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return sum_[i + sx_ * (j + sy_ * k)];
  }

  std::size_t sx_, sy_;
  std::vector<double> sum_;
};

}  // namespace detail

/// Image-quality metrics restricted to `region`, for intensities in [0, 1].
///
/// SSIM averages the local SSIM map (uniform cubic window, clipped at the
/// volume edges, K1 = 0.01, K2 = 0.03, L = 1) over window centres in the region.
inline MetricEntry masked_metrics(const Volume3& pred, const Volume3& gt,
                                  const MaskVolume& region, const MetricConfig& cfg = {}) {
  cfg.validate();
  const Shape3 s = gt.shape();
  if (pred.shape() != s || region.shape() != s) {
    throw InvalidArgument("masked_metrics: shapes differ");
  }
  const std::size_t n_region = count_ones(region);
  if (n_region == 0) throw InvalidArgument("masked_metrics: empty region");

  MetricEntry e;
  double abs_sum = 0.0, sq_sum = 0.0, log_sum = 0.0;
  for (std::size_t n = 0; n < s.size(); ++n) {
    if (!region[n]) continue;
    const double d = pred[n] - gt[n];
    abs_sum += std::abs(d);
    sq_sum += d * d;
    const double ld = std::log1p(pred[n]) - std::log1p(gt[n]);
    log_sum += ld * ld;
  }
  const double count = static_cast<double>(n_region);
  e.mae = abs_sum / count;
  e.mse = sq_sum / count;
  e.rmse = std::sqrt(e.mse);
  e.msle = log_sum / count;
  e.psnr = e.mse < cfg.psnr_mse_floor ? cfg.psnr_cap : 10.0 * std::log10(1.0 / e.mse);

  const auto& x = pred.values();
  const auto& y = gt.values();
  std::vector<double> xx(s.size()), yy(s.size()), xy(s.size());
  for (std::size_t n = 0; n < s.size(); ++n) {
    xx[n] = x[n] * x[n];
    yy[n] = y[n] * y[n];
    xy[n] = x[n] * y[n];
  }
  const detail::BoxSums sx(s, x), sy(s, y), sxx(s, xx), syy(s, yy), sxy(s, xy);
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  const std::size_t h = cfg.ssim_window / 2;
  const auto lo = [h](std::size_t c) { return c >= h ? c - h : 0; };
  const auto hi = [h](std::size_t c, std::size_t n) { return std::min(c + h + 1, n); };
  double ssim_sum = 0.0;
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i) {
        if (!region(i, j, k)) continue;
        const std::size_t i0 = lo(i), i1 = hi(i, s.nx);
        const std::size_t j0 = lo(j), j1 = hi(j, s.ny);
        const std::size_t k0 = lo(k), k1 = hi(k, s.nz);
        const double w = static_cast<double>((i1 - i0) * (j1 - j0) * (k1 - k0));
        const double mx = sx.box(i0, i1, j0, j1, k0, k1) / w;
        const double my = sy.box(i0, i1, j0, j1, k0, k1) / w;
        const double vx = sxx.box(i0, i1, j0, j1, k0, k1) / w - mx * mx;
        const double vy = syy.box(i0, i1, j0, j1, k0, k1) / w - my * my;
        const double cxy = sxy.box(i0, i1, j0, j1, k0, k1) / w - mx * my;
        ssim_sum += ((2.0 * mx * my + kC1) * (2.0 * cxy + kC2)) /
                    ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      }
  e.ssim = ssim_sum / count;
  return e;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;
};

enum class StdConvention { population, sample };

inline Summary summarize(std::vector<double> v, StdConvention conv = StdConvention::population) {
  if (v.empty()) throw InvalidArgument("summarize: no values");
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double denom = conv == StdConvention::sample && v.size() > 1 ? n - 1.0 : n;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  const double median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  return {mean, median, std::sqrt(ss / denom)};
}

struct MetricReport {
  std::vector<MetricEntry> entries;
  std::array<Summary, 6> summary{};  // indexed like kMetricNames
};

inline MetricReport aggregate_report(std::vector<MetricEntry> entries,
                                     StdConvention conv = StdConvention::population) {
  if (entries.empty()) throw InvalidArgument("aggregate_report: no entries");
  MetricReport r;
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    std::vector<double> col;
    col.reserve(entries.size());
    for (const auto& e : entries) col.push_back(e.values()[m]);
    r.summary[m] = summarize(std::move(col), conv);
  }
  r.entries = std::move(entries);
  return r;
}

/// Reference mean/median/std for the healthy-tissue and tumor inpainting
/// tasks, echoed in reports for context. Not reproducible at desk scale.
struct ReferenceRow {
  const char* metric;
  double mean, median, std;
};

inline constexpr std::array<ReferenceRow, 6> kReferenceHealthy{{
    {"SSIM", 0.754, 0.746, 0.134},
    {"PSNR", 18.542, 18.140, 3.121},
    {"MAE", 0.088, 0.084, 0.032},
    {"MSE", 0.017, 0.015, 0.011},
    {"RMSE", 0.123, 0.121, 0.040},
    {"MSLE", 0.007, 0.006, 0.005},
}};

inline constexpr std::array<ReferenceRow, 6> kReferenceTumor{{
    {"SSIM", 0.578, 0.576, 0.090},
    {"PSNR", 17.360, 17.664, 2.262},
    {"MAE", 0.104, 0.095, 0.041},
    {"MSE", 0.022, 0.017, 0.024},
    {"RMSE", 0.141, 0.131, 0.047},
    {"MSLE", 0.009, 0.007, 0.011},
}};

inline nlohmann::json to_json(const MetricEntry& e) {
  return {{"subject", e.subject}, {"SSIM", e.ssim}, {"PSNR", e.psnr}, {"MAE", e.mae},
          {"MSE", e.mse},         {"RMSE", e.rmse}, {"MSLE", e.msle}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j{{"subjects", nlohmann::json::array()}, {"summary", nlohmann::json::object()}};
  for (const auto& e : r.entries) j["subjects"].push_back(to_json(e));
  for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
    j["summary"][kMetricNames[m]] = {{"mean", r.summary[m].mean},
                                     {"median", r.summary[m].median},
                                     {"std", r.summary[m].std}};
  }
  return j;
}

/// Per-subject rows followed by Mean / Median / Std rows.
inline std::string to_csv(const MetricReport& r) {
  const auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string out = "subject";
  for (const char* name : kMetricNames) out += std::string(",") + name;
  out += "\n";
  for (const auto& e : r.entries) {
    out += e.subject;
    for (double v : e.values()) out += "," + fmt(v);
    out += "\n";
  }
  const std::array<const char*, 3> rows{"Mean", "Median", "Std"};
  for (std::size_t row = 0; row < rows.size(); ++row) {
    out += rows[row];
    for (const auto& s : r.summary) {
      out += "," + fmt(row == 0 ? s.mean : row == 1 ? s.median : s.std);
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation masks

struct MaskSpec {
  std::array<double, 3> semi_axes{8.0, 8.0, 8.0};  // voxels
  std::uint64_t seed = 0;
  std::size_t tumor_dilation = 0;
  std::size_t max_attempts = 10000;
  double black_threshold = 0.0;

  void validate() const {
    for (double a : semi_axes) {
      if (!(a > 0.0)) throw ConfigError("ellipsoid semi-axes must be positive");
    }
  }
};

struct MaskPair {
  MaskVolume tumor;
  MaskVolume healthy;
};

/// Voxels of the ellipsoid centred at (cx, cy, cz) with the given semi-axes.
inline void for_each_ellipsoid_voxel(const Shape3& s, std::array<double, 3> c,
                                     const std::array<double, 3>& axes,
                                     const auto& fn) {
  const auto range = [](double centre, double a, std::size_t n) {
    const double lo = std::max(0.0, std::ceil(centre - a));
    const double hi = std::min(static_cast<double>(n) - 1.0, std::floor(centre + a));
    return std::pair{static_cast<std::ptrdiff_t>(lo), static_cast<std::ptrdiff_t>(hi)};
  };
  const auto [i0, i1] = range(c[0], axes[0], s.nx);
  const auto [j0, j1] = range(c[1], axes[1], s.ny);
  const auto [k0, k1] = range(c[2], axes[2], s.nz);
  for (auto k = k0; k <= k1; ++k)
    for (auto j = j0; j <= j1; ++j)
      for (auto i = i0; i <= i1; ++i) {
        const double dx = (static_cast<double>(i) - c[0]) / axes[0];
        const double dy = (static_cast<double>(j) - c[1]) / axes[1];
        const double dz = (static_cast<double>(k) - c[2]) / axes[2];
        if (dx * dx + dy * dy + dz * dz <= 1.0) {
          fn(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
             static_cast<std::size_t>(k));
        }
      }
}

/// Tumor mask = tumor segmentation (optionally dilated); healthy mask = an
/// ellipsoid placed by seeded rejection sampling entirely inside non-black
/// voxels of `gt`, disjoint from the tumor mask and clear of the volume faces.
inline MaskPair generate_masks(const Volume3& gt, const MaskVolume& tumor_seg,
                               const MaskSpec& spec) {
  spec.validate();
  const Shape3 s = gt.shape();
  if (tumor_seg.shape() != s) throw InvalidArgument("generate_masks: shapes differ");
  MaskPair out{dilate(tumor_seg, spec.tumor_dilation), MaskVolume(s, 0, gt.spacing())};
  out.tumor.set_spacing(gt.spacing());

  // Centre range keeping the ellipsoid's bounding box one voxel off each face.
  std::array<std::pair<std::size_t, std::size_t>, 3> centre_range{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double lo = std::ceil(1.0 + spec.semi_axes[a]);
    const double hi = std::floor(static_cast<double>(s[a]) - 2.0 - spec.semi_axes[a]);
    if (lo > hi) {
      throw InvalidArgument("generate_masks: ellipsoid does not fit in volume " + to_string(s));
    }
    centre_range[a] = {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
  Rng rng(spec.seed);
  for (std::size_t attempt = 0; attempt < spec.max_attempts; ++attempt) {
    std::array<double, 3> c{};
    for (std::size_t a = 0; a < 3; ++a) {
      const auto [lo, hi] = centre_range[a];
      c[a] = static_cast<double>(rng.uniform_int(lo, hi));
    }
    bool ok = true;
    for_each_ellipsoid_voxel(s, c, spec.semi_axes, [&](std::size_t i, std::size_t j, std::size_t k) {
      if (!ok) return;
      if (!(gt(i, j, k) > spec.black_threshold) || out.tumor(i, j, k)) ok = false;
    });
    if (!ok) continue;
    for_each_ellipsoid_voxel(s, c, spec.semi_axes, [&](std::size_t i, std::size_t j, std::size_t k) {
      out.healthy(i, j, k) = 1;
    });
    return out;
  }
  throw InvalidArgument("generate_masks: no feasible healthy-region placement after " +
                        std::to_string(spec.max_attempts) + " attempts");
}

}  // namespace voxdiff
