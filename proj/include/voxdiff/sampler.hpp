#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "voxdiff/condition.hpp"
#include "voxdiff/denoiser.hpp"
#include "voxdiff/error.hpp"
#include "voxdiff/latent.hpp"
#include "voxdiff/random.hpp"
#include "voxdiff/schedule.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

struct SamplerConfig {
  double eta = 1.0;              // 0 deterministic, 1 ancestral
  std::size_t T_sample = 250;    // 0 means "use the schedule as given"
  std::size_t jump_length = 10;
  std::size_t n_resample = 10;
  std::uint64_t seed = 0;
  bool dilate_unknown = true;

  void validate() const {
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
    if (jump_length < 1 || n_resample < 1) {
      throw ConfigError("jump_length and n_resample must be positive");
    }
  }
};

namespace detail {

inline void require_layout(const LatentVolume& a, const LatentVolume& b,
                           const char* what) {
  if (!a.same_layout(b)) throw InvalidArgument(std::string(what) + ": latent layouts differ");
}

inline void require_mask(const LatentVolume& z, const MaskVolume& m) {
  if (m.shape() != z.shape()) {
    throw InvalidArgument("mask shape " + to_string(m.shape()) +
                          " does not match latent grid " + to_string(z.shape()));
  }
}

}  // namespace detail

/// z_t = sqrt(ab_t) z_0 + sqrt(1 - ab_t) eps
inline LatentVolume forward_diffuse(const LatentVolume& z0, std::size_t t,
                                    const LatentVolume& eps, const NoiseSchedule& s) {
  detail::require_layout(z0, eps, "forward_diffuse");
  const double sab = std::sqrt(s.alpha_bar(t));
  const double s1m = std::sqrt(1.0 - s.alpha_bar(t));
  LatentVolume out(z0.channels(), z0.shape());
  for (std::size_t n = 0; n < z0.size(); ++n) out[n] = sab * z0[n] + s1m * eps[n];
  return out;
}

/// Standard deviation of the injected noise for a t -> t_prev update.
inline double reverse_sigma(const NoiseSchedule& s, std::size_t t,
                            std::size_t t_prev, double eta) {
  const double ab = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t_prev);
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) *
         std::sqrt(1.0 - ab / ab_prev);
}

/// Generalised reverse update from t to t_prev < t:
///   z0_hat = (z_t - sqrt(1 - ab_t) eps_hat) / sqrt(ab_t)
///   z_prev = sqrt(ab_prev) z0_hat + sqrt(1 - ab_prev - sigma^2) eps_hat + sigma eps
inline LatentVolume reverse_step(const LatentVolume& z_t, std::size_t t,
                                 std::size_t t_prev, const Denoiser& d,
                                 const ConditioningField* c, const NoiseSchedule& s,
                                 double eta, Rng& rng) {
  if (!(t > t_prev)) throw InvalidArgument("reverse_step: need t > t_prev");
  const double ab = s.alpha_bar(t);
  const double ab_prev = s.alpha_bar(t_prev);
  const double sigma = reverse_sigma(s, t, t_prev, eta);
  const double dir2 = 1.0 - ab_prev - sigma * sigma;
  if (dir2 < -1e-12) {
    throw NumericError("reverse_step: 1 - ab_prev - sigma^2 is negative");
  }
  const double dir = std::sqrt(std::max(dir2, 0.0));
  const double sab = std::sqrt(ab);
  const double s1m = std::sqrt(1.0 - ab);
  const double sab_prev = std::sqrt(ab_prev);

  const LatentVolume eps_hat = predict_noise(d, z_t, noise_level(s, t), c);
  detail::require_layout(z_t, eps_hat, "reverse_step");
  LatentVolume out(z_t.channels(), z_t.shape());
  for (std::size_t n = 0; n < z_t.size(); ++n) {
    const double z0_hat = (z_t[n] - s1m * eps_hat[n]) / sab;
    double v = sab_prev * z0_hat + dir * eps_hat[n];
    if (sigma > 0.0) v += sigma * rng.normal();
    out[n] = v;
  }
  return out;
}

inline LatentVolume reverse_step(const LatentVolume& z_t, std::size_t t,
                                 std::size_t t_prev, const Denoiser& d,
                                 const ConditioningField* c, const NoiseSchedule& s,
                                 const SamplerConfig& cfg, Rng& rng) {
  return reverse_step(z_t, t, t_prev, d, c, s, cfg.eta, rng);
}

/// Replaces known voxels (m == 1, all channels) with a draw from
/// N(sqrt(ab_t) z0_gt, (1 - ab_t) I); unknown voxels keep z_hat.
inline LatentVolume inject_known(const LatentVolume& z_hat, const LatentVolume& z0_gt,
                                 const MaskVolume& m, std::size_t t,
                                 const NoiseSchedule& s, Rng& rng) {
  detail::require_layout(z_hat, z0_gt, "inject_known");
  detail::require_mask(z_hat, m);
  const double sab = std::sqrt(s.alpha_bar(t));
  const double s1m = std::sqrt(1.0 - s.alpha_bar(t));
  LatentVolume out = z_hat;
  const std::size_t nv = z_hat.voxels();
  for (std::size_t ch = 0; ch < z_hat.channels(); ++ch) {
    auto o = out.channel(ch);
    const auto g = z0_gt.channel(ch);
    for (std::size_t v = 0; v < nv; ++v) {
      if (!m[v]) continue;
      o[v] = s1m > 0.0 ? sab * g[v] + s1m * rng.normal() : g[v];
    }
  }
  return out;
}

/// One-step forward kernel t -> t + 1: sqrt(1 - beta) z + sqrt(beta) eps.
inline LatentVolume renoise_step(const LatentVolume& z, std::size_t t,
                                 const NoiseSchedule& s, Rng& rng) {
  const double beta = s.beta(t + 1);
  const double keep = std::sqrt(1.0 - beta);
  const double add = std::sqrt(beta);
  LatentVolume out(z.channels(), z.shape());
  for (std::size_t n = 0; n < z.size(); ++n) out[n] = keep * z[n] + add * rng.normal();
  return out;
}

/// Optional instrumentation for repaint_inpaint.
struct SamplerHooks {
  const LatentVolume* initial = nullptr;       // replaces the N(0, I) start
  std::vector<Transition>* executed = nullptr; // receives every transition
};

/// Resampled inpainting in latent space.
///
/// `known` marks voxels whose ground truth is available (1 = known). Down
/// transitions denoise and then composite the forward-noised ground truth into
/// the known voxels; up transitions re-noise the whole latent by one step.
/// With `dilate_unknown`, the region treated as unknown during sampling is
/// grown by one 6-connected dilation. The returned latent equals z0_gt on every
/// voxel of the original `known` mask.
inline LatentVolume repaint_inpaint(const LatentVolume& z0_gt, const MaskVolume& known,
                                    const Denoiser& d, const ConditioningField* c,
                                    const NoiseSchedule& full, const SamplerConfig& cfg,
                                    SamplerHooks hooks = {}) {
  cfg.validate();
  detail::require_mask(z0_gt, known);
  if (!is_binary(known)) throw InvalidArgument("repaint_inpaint: mask is not binary");
  const std::size_t T_sample = cfg.T_sample == 0 ? full.steps() : cfg.T_sample;
  if (T_sample > full.steps()) {
    throw ConfigError("T_sample " + std::to_string(T_sample) +
                      " exceeds schedule length " + std::to_string(full.steps()));
  }
  if (cfg.jump_length > T_sample) {
    throw ConfigError("jump_length exceeds T_sample");
  }
  const NoiseSchedule s =
      T_sample == full.steps() ? full : subsample_schedule(full, T_sample);
  const RePaintPlan plan = repaint_plan(T_sample, cfg.jump_length, cfg.n_resample);

  const MaskVolume sampling_known =
      cfg.dilate_unknown ? invert(dilate(invert(known), 1)) : known;

  Rng rng(cfg.seed);
  LatentVolume x(z0_gt.channels(), z0_gt.shape());
  if (hooks.initial) {
    detail::require_layout(*hooks.initial, z0_gt, "repaint_inpaint initial");
    x = *hooks.initial;
  } else {
    rng.fill_normal(x.data());
  }
  std::size_t t_cur = T_sample;
  for (const Transition& tr : plan.transitions) {
    if (tr.from != t_cur) throw Error(ErrorKind::numeric, "repaint plan is not contiguous");
    if (tr.is_down()) {
      x = reverse_step(x, tr.from, tr.to, d, c, s, cfg.eta, rng);
      x = inject_known(x, z0_gt, sampling_known, tr.to, s, rng);
    } else {
      x = renoise_step(x, tr.from, s, rng);
    }
    t_cur = tr.to;
    if (hooks.executed) hooks.executed->push_back(tr);
  }
  // Known voxels are returned as given.
  const std::size_t nv = x.voxels();
  for (std::size_t ch = 0; ch < x.channels(); ++ch) {
    auto o = x.channel(ch);
    const auto g = z0_gt.channel(ch);
    for (std::size_t v = 0; v < nv; ++v)
      if (known[v]) o[v] = g[v];
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError("sampler produced a non-finite latent");
  }
  return x;
}

}  // namespace voxdiff
