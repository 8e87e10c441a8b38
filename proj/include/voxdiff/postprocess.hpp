#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "voxdiff/error.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

// ---------------------------------------------------------------------------
// Poisson blending

struct BlendConfig {
  double cg_tolerance = 1e-6;
  /// 0 selects 10 * sqrt(region voxels) + 1000.
  std::size_t cg_max_iters = 0;

  void validate() const {
    if (!(cg_tolerance > 0.0)) throw ConfigError("cg_tolerance must be positive");
  }

  std::size_t max_iters_for(std::size_t unknowns) const {
    if (cg_max_iters > 0) return cg_max_iters;
    return static_cast<std::size_t>(10.0 * std::sqrt(static_cast<double>(unknowns))) + 1000;
  }
};

struct BlendReport {
  std::size_t unknowns = 0;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> residual_history;  // relative residual per iteration, incl. start
};

/// Called after every CG iteration with the current interior iterate.
using CgObserver = std::function<void(std::size_t iteration, std::span<const double> x)>;

/// Solves the 6-neighbour discrete Poisson equation lap(f) = lap(source)
/// inside `region` with Dirichlet values from `target` on the region's outer
/// neighbours. Outside the region the result is `target`, bit for bit.
inline Volume3 poisson_blend(const Volume3& target, const Volume3& source,
                             const MaskVolume& region, const BlendConfig& cfg,
                             BlendReport* report = nullptr,
                             const CgObserver& observer = {}) {
  cfg.validate();
  const Shape3 s = target.shape();
  if (source.shape() != s || region.shape() != s) {
    throw InvalidArgument("poisson_blend: target, source and region shapes differ");
  }
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> slot(s.size(), kNone);
  std::vector<std::size_t> voxels;
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i) {
        const std::size_t n = s.index(i, j, k);
        if (!region[n]) continue;
        if (i == 0 || j == 0 || k == 0 || i + 1 == s.nx || j + 1 == s.ny || k + 1 == s.nz) {
          throw InvalidArgument("poisson_blend: region touches the volume boundary at (" +
                                std::to_string(i) + "," + std::to_string(j) + "," +
                                std::to_string(k) + ")");
        }
        slot[n] = voxels.size();
        voxels.push_back(n);
      }

  Volume3 out = target;
  if (report) *report = BlendReport{voxels.size(), 0, 0.0, {}};
  if (voxels.empty()) return out;

  const std::size_t m = voxels.size();
  const std::array<std::ptrdiff_t, 6> offsets{
      1, -1, static_cast<std::ptrdiff_t>(s.nx), -static_cast<std::ptrdiff_t>(s.nx),
      static_cast<std::ptrdiff_t>(s.nx * s.ny), -static_cast<std::ptrdiff_t>(s.nx * s.ny)};

  // Right-hand side: guidance divergence plus Dirichlet contributions.
  std::vector<double> b(m, 0.0);
  for (std::size_t u = 0; u < m; ++u) {
    const std::size_t n = voxels[u];
    double rhs = 0.0;
    for (auto off : offsets) {
      const std::size_t q = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(n) + off);
      rhs += source[n] - source[q];
      if (slot[q] == kNone) rhs += target[q];
    }
    b[u] = rhs;
  }

  // A = 6 I - (region adjacency); SPD.
  const auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t u = 0; u < m; ++u) {
      const std::size_t n = voxels[u];
      double acc = 6.0 * x[u];
      for (auto off : offsets) {
        const std::size_t q = slot[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(n) + off)];
        if (q != kNone) acc -= x[q];
      }
      y[u] = acc;
    }
  };
  const auto dotp = [m](const std::vector<double>& a, const std::vector<double>& c) {
    double acc = 0.0;
    for (std::size_t u = 0; u < m; ++u) acc += a[u] * c[u];
    return acc;
  };

  std::vector<double> x(m);
  for (std::size_t u = 0; u < m; ++u) x[u] = source[voxels[u]];
  std::vector<double> r(m), p(m), ap(m);
  apply(x, ap);
  for (std::size_t u = 0; u < m; ++u) r[u] = b[u] - ap[u];
  const double b_norm = std::sqrt(dotp(b, b));
  const double scale = b_norm > 0.0 ? b_norm : 1.0;
  double rr = dotp(r, r);
  double rel = std::sqrt(rr) / scale;
  std::vector<double> history{rel};
  p = r;
  const std::size_t max_iters = cfg.max_iters_for(m);
  std::size_t it = 0;
  while (rel > cfg.cg_tolerance && it < max_iters) {
    apply(p, ap);
    const double pap = dotp(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    for (std::size_t u = 0; u < m; ++u) {
      x[u] += alpha * p[u];
      r[u] -= alpha * ap[u];
    }
    const double rr_new = dotp(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t u = 0; u < m; ++u) p[u] = r[u] + beta * p[u];
    ++it;
    rel = std::sqrt(rr) / scale;
    history.push_back(rel);
    if (observer) observer(it, x);
  }
  if (report) {
    report->iterations = it;
    report->relative_residual = rel;
    report->residual_history = history;
  }
  if (!(rel <= cfg.cg_tolerance)) {
    throw SolverError("poisson_blend: conjugate gradient stopped after " +
                          std::to_string(it) + " iterations with relative residual " +
                          std::to_string(rel),
                      rel);
  }
  for (std::size_t u = 0; u < m; ++u) out[voxels[u]] = x[u];
  return out;
}

// ---------------------------------------------------------------------------
// Histogram matching

struct HistogramConfig {
  double black_threshold = 0.0;  // voxels <= threshold are "black"
  std::size_t bins = 256;
  bool exact = false;            // exact empirical quantiles instead of bins

  void validate() const {
    if (!exact && bins < 1) throw ConfigError("histogram bins must be positive");
  }
};

/// Monotone map sending the empirical distribution of `from` onto that of `to`.
///
/// A value's quantile is its mid-rank in `from` (mid-bin cumulative count in
/// binned mode); the image is the nearest-rank quantile of `to`. Binned mode
/// interpolates linearly between bin centres and clamps beyond the outer ones.
class QuantileMap {
 public:
  QuantileMap(std::vector<double> from, std::vector<double> to, const HistogramConfig& cfg)
      : exact_(cfg.exact), from_(std::move(from)), to_(std::move(to)) {
    cfg.validate();
    if (from_.size() < 2 || to_.size() < 2) {
      throw InvalidArgument("histogram_match: need at least 2 non-black voxels in each input");
    }
    std::sort(from_.begin(), from_.end());
    std::sort(to_.begin(), to_.end());
    if (!exact_) build_lut(cfg.bins);
  }

  double operator()(double x) const {
    if (exact_) {
      const auto lo = std::lower_bound(from_.begin(), from_.end(), x);
      const auto hi = std::upper_bound(lo, from_.end(), x);
      const double below = static_cast<double>(lo - from_.begin());
      const double equal = static_cast<double>(hi - lo);
      return quantile((below + 0.5 * equal) / static_cast<double>(from_.size()));
    }
    if (x <= knot_x_.front()) return knot_y_.front();
    if (x >= knot_x_.back()) return knot_y_.back();
    const auto b = static_cast<std::size_t>(
        std::upper_bound(knot_x_.begin(), knot_x_.end(), x) - knot_x_.begin() - 1);
    const double f = (x - knot_x_[b]) / (knot_x_[b + 1] - knot_x_[b]);
    return knot_y_[b] + f * (knot_y_[b + 1] - knot_y_[b]);
  }

  /// Width of one histogram bin of the source distribution (0 in exact mode).
  double bin_width() const noexcept { return exact_ ? 0.0 : width_; }

 private:
  double quantile(double u) const {
    const double n = static_cast<double>(to_.size());
    auto idx = static_cast<std::ptrdiff_t>(std::ceil(u * n)) - 1;
    idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(to_.size()) - 1);
    return to_[static_cast<std::size_t>(idx)];
  }

  void build_lut(std::size_t bins) {
    lo_ = from_.front();
    const double hi = from_.back();
    width_ = hi > lo_ ? (hi - lo_) / static_cast<double>(bins) : 1.0;
    std::vector<std::size_t> counts(bins, 0);
    for (double v : from_) {
      auto b = static_cast<std::size_t>((v - lo_) / width_);
      counts[std::min(b, bins - 1)]++;
    }
    // One knot per occupied bin, at the bin centre; empty bins are skipped so
    // interpolation never passes through stale values.
    double cum = 0.0;
    const double n = static_cast<double>(from_.size());
    for (std::size_t b = 0; b < bins; ++b) {
      if (counts[b] == 0) continue;
      const double c = static_cast<double>(counts[b]);
      knot_x_.push_back(lo_ + (static_cast<double>(b) + 0.5) * width_);
      knot_y_.push_back(quantile((cum + 0.5 * c) / n));
      cum += c;
    }
  }

  bool exact_;
  std::vector<double> from_;
  std::vector<double> to_;
  std::vector<double> knot_x_, knot_y_;
  double lo_ = 0.0;
  double width_ = 1.0;
};

namespace detail {

inline std::vector<double> non_black(std::span<const double> v, double threshold) {
  std::vector<double> out;
  for (double x : v)
    if (x > threshold) out.push_back(x);
  return out;
}

}  // namespace detail

/// Remaps the non-black intensities of `generated` onto the distribution of
/// the non-black intensities of `reference`. Black voxels pass through.
inline Volume3 histogram_match(const Volume3& generated, const Volume3& reference,
                               const HistogramConfig& cfg = {}) {
  const QuantileMap map(detail::non_black(generated.data(), cfg.black_threshold),
                        detail::non_black(reference.data(), cfg.black_threshold), cfg);
  Volume3 out = generated;
  for (double& v : out.data())
    if (v > cfg.black_threshold) v = map(v);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

enum class PostprocessOrder { he_first, pb_first };

struct PostprocessConfig {
  bool blend = true;
  bool match = true;
  PostprocessOrder order = PostprocessOrder::he_first;
  BlendConfig blend_cfg;
  HistogramConfig hist_cfg;
};

/// region ? generated : target
inline Volume3 composite(const Volume3& target, const Volume3& generated,
                         const MaskVolume& region) {
  if (generated.shape() != target.shape() || region.shape() != target.shape()) {
    throw InvalidArgument("composite: shapes differ");
  }
  Volume3 out = target;
  for (std::size_t n = 0; n < out.size(); ++n)
    if (region[n]) out[n] = generated[n];
  return out;
}

/// Quantile map from generator intensities to reference intensities, fitted
/// on the same voxels of both: the whole volume when `reference` is given,
/// otherwise the known context outside `region` with `target` as reference.
inline QuantileMap fit_intensity_map(const Volume3& target, const Volume3& generated,
                                     const MaskVolume& region, const Volume3* reference,
                                     const HistogramConfig& cfg) {
  if (reference && reference->shape() != generated.shape()) {
    throw InvalidArgument("histogram reference shape " + to_string(reference->shape()) +
                          " does not match " + to_string(generated.shape()));
  }
  std::vector<double> from, to;
  for (std::size_t n = 0; n < generated.size(); ++n) {
    if (!reference && region[n]) continue;
    if (generated[n] > cfg.black_threshold) from.push_back(generated[n]);
    const double r = reference ? (*reference)[n] : target[n];
    if (r > cfg.black_threshold) to.push_back(r);
  }
  return QuantileMap(std::move(from), std::move(to), cfg);
}

/// Applies `map` to the non-black voxels of `x`, restricted to `region` if given.
inline Volume3 apply_intensity_map(const Volume3& x, const QuantileMap& map,
                                   const HistogramConfig& cfg,
                                   const MaskVolume* region = nullptr) {
  Volume3 out = x;
  for (std::size_t n = 0; n < out.size(); ++n)
    if ((!region || (*region)[n]) && out[n] > cfg.black_threshold) out[n] = map(out[n]);
  return out;
}

/// Harmonises a generated volume with its known context.
///
/// `target` holds the known image; its voxels outside `region` are kept.
/// Blending takes its guidance gradients from the full generated volume.
inline Volume3 harmonize(const Volume3& target, const Volume3& generated,
                         const MaskVolume& region, const Volume3* reference,
                         const PostprocessConfig& cfg, BlendReport* report = nullptr) {
  if (target.shape() != generated.shape() || region.shape() != target.shape()) {
    throw InvalidArgument("harmonize: shapes differ");
  }
  if (count_ones(region) == 0) return composite(target, generated, region);
  std::optional<QuantileMap> map;
  if (cfg.match) map.emplace(fit_intensity_map(target, generated, region, reference, cfg.hist_cfg));
  // Region voxels on the volume faces have no outer neighbour to anchor a
  // Dirichlet problem; they keep the generated value and bound the interior.
  MaskVolume interior = region;
  const Shape3 s = region.shape();
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i)
        if (i == 0 || j == 0 || k == 0 || i + 1 == s.nx || j + 1 == s.ny || k + 1 == s.nz) {
          interior(i, j, k) = 0;
        }
  const auto place = [&](const Volume3& source) {
    if (!cfg.blend) return composite(target, source, region);
    if (interior == region) return poisson_blend(target, source, region, cfg.blend_cfg, report);
    return poisson_blend(composite(target, source, region), source, interior, cfg.blend_cfg,
                         report);
  };
  if (cfg.order == PostprocessOrder::he_first) {
    return place(map ? apply_intensity_map(generated, *map, cfg.hist_cfg) : generated);
  }
  Volume3 x = place(generated);
  return map ? apply_intensity_map(x, *map, cfg.hist_cfg, &region) : x;
}

}  // namespace voxdiff
