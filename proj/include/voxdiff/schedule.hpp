#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "voxdiff/error.hpp"

namespace voxdiff {

/// Discrete noise schedule indexed by t = 0..T.
///
/// t = 0 is the clean-data state (alpha_bar(0) == 1, beta(0) == 0). For a
/// respaced schedule, `original_timestep(t)` names the step of the schedule
/// it was selected from, which is the time index a trained denoiser expects.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Builds from cumulative signal levels alpha_bar(1..T); betas follow from
  /// successive ratios.
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar_1_to_T,
                                      std::vector<std::size_t> original) {
    const std::size_t T = alpha_bar_1_to_T.size();
    detail::require(T >= 1, "noise schedule needs at least one step");
    detail::require(original.size() == T,
                    "original timestep table must have T entries");
    NoiseSchedule s;
    s.alpha_bar_.reserve(T + 1);
    s.alpha_bar_.push_back(1.0);
    s.beta_.push_back(0.0);
    s.alpha_.push_back(1.0);
    s.original_.push_back(0);
    for (std::size_t t = 1; t <= T; ++t) {
      const double ab = alpha_bar_1_to_T[t - 1];
      const double prev = s.alpha_bar_.back();
      if (!(ab > 0.0 && ab < prev)) {
        throw InvalidArgument("alpha_bar must be positive and strictly decreasing");
      }
      s.alpha_bar_.push_back(ab);
      s.alpha_.push_back(ab / prev);
      s.beta_.push_back(1.0 - ab / prev);
      s.original_.push_back(original[t - 1]);
    }
    return s;
  }

  std::size_t steps() const noexcept { return alpha_bar_.size() - 1; }

  double beta(std::size_t t) const { return beta_.at(check(t)); }
  double alpha(std::size_t t) const { return alpha_.at(check(t)); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(check(t)); }
  std::size_t original_timestep(std::size_t t) const {
    return original_.at(check(t));
  }

  bool is_respaced() const noexcept {
    for (std::size_t t = 0; t < original_.size(); ++t)
      if (original_[t] != t) return true;
    return false;
  }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

 private:
  friend NoiseSchedule linear_beta_schedule(std::size_t, double, double);

  std::size_t check(std::size_t t) const {
    if (t >= alpha_bar_.size()) {
      throw InvalidArgument("timestep " + std::to_string(t) +
                            " outside schedule range 0.." +
                            std::to_string(steps()));
    }
    return t;
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<std::size_t> original_;
};

/// beta_t interpolates linearly with beta_1 = beta_start, beta_T = beta_end.
inline NoiseSchedule linear_beta_schedule(std::size_t T, double beta_start,
                                          double beta_end) {
  if (T < 1 || !(beta_start > 0.0) || !(beta_start <= beta_end) ||
      !(beta_end < 1.0)) {
    throw InvalidArgument("linear_beta_schedule: need T >= 1 and 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta_.assign(T + 1, 0.0);
  s.alpha_.assign(T + 1, 1.0);
  s.alpha_bar_.assign(T + 1, 1.0);
  s.original_.resize(T + 1);
  for (std::size_t t = 0; t <= T; ++t) s.original_[t] = t;
  for (std::size_t t = 1; t <= T; ++t) {
    const double frac =
        T == 1 ? 0.0
               : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    double beta = beta_start + frac * (beta_end - beta_start);
    if (t == T) beta = T == 1 ? beta_start : beta_end;
    s.beta_[t] = beta;
    s.alpha_[t] = 1.0 - beta;
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * s.alpha_[t];
  }
  return s;
}

/// Keeps `T_sample` evenly spaced steps t_k = floor(k * T / T_sample),
/// k = 1..T_sample, preserving alpha_bar at each kept step.
inline NoiseSchedule subsample_schedule(const NoiseSchedule& s,
                                        std::size_t T_sample) {
  const std::size_t T = s.steps();
  if (T_sample < 1 || T_sample > T) {
    throw InvalidArgument("subsample_schedule: T_sample must lie in 1.." +
                          std::to_string(T));
  }
  std::vector<double> ab;
  std::vector<std::size_t> orig;
  ab.reserve(T_sample);
  orig.reserve(T_sample);
  for (std::size_t k = 1; k <= T_sample; ++k) {
    const std::size_t t = k * T / T_sample;
    ab.push_back(s.alpha_bar(t));
    orig.push_back(s.original_timestep(t));
  }
  return NoiseSchedule::from_alpha_bar(std::move(ab), std::move(orig));
}

// ---------------------------------------------------------------------------

struct Transition {
  std::size_t from = 0;
  std::size_t to = 0;

  bool is_down() const noexcept { return to < from; }
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Ordered unit-step timestep transitions executed by the inpainting loop.
struct RePaintPlan {
  std::size_t T_sample = 0;
  std::size_t jump_length = 0;
  std::size_t n_resample = 0;
  std::vector<Transition> transitions;

  std::size_t down_count() const noexcept {
    std::size_t n = 0;
    for (const auto& tr : transitions) n += tr.is_down();
    return n;
  }
  std::size_t up_count() const noexcept {
    return transitions.size() - down_count();
  }
};

/// Resampling schedule: plain descent from T_sample to 0, except that on
/// arriving at each jump point t = 1 + m * jump_length (with
/// t - 1 < T_sample - jump_length) the chain climbs jump_length steps and
/// descends again, n_resample - 1 times.
inline RePaintPlan repaint_plan(std::size_t T_sample, std::size_t jump_length,
                                std::size_t n_resample) {
  if (T_sample < 1 || jump_length < 1 || n_resample < 1 ||
      jump_length > T_sample) {
    throw InvalidArgument(
        "repaint_plan: counts must be positive with jump_length <= T_sample");
  }
  RePaintPlan plan{T_sample, jump_length, n_resample, {}};
  auto& tr = plan.transitions;
  const auto is_jump_point = [&](std::size_t t) {
    return t >= 1 && (t - 1) % jump_length == 0 &&
           t - 1 + jump_length < T_sample;
  };
  for (std::size_t t = T_sample; t > 0; --t) {
    tr.push_back({t, t - 1});
    const std::size_t here = t - 1;
    if (!is_jump_point(here)) continue;
    for (std::size_t r = 1; r < n_resample; ++r) {
      for (std::size_t u = here; u < here + jump_length; ++u) {
        tr.push_back({u, u + 1});
      }
      for (std::size_t d = here + jump_length; d > here; --d) {
        tr.push_back({d, d - 1});
      }
    }
  }
  return plan;
}

}  // namespace voxdiff
