#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "voxdiff/condition.hpp"
#include "voxdiff/error.hpp"
#include "voxdiff/latent.hpp"
#include "voxdiff/random.hpp"
#include "voxdiff/schedule.hpp"
#include "voxdiff/volume_io.hpp"

namespace voxdiff {

/// Time argument handed to a denoiser: the step index of the training
/// schedule plus its signal level, so analytic models need no table lookup.
struct NoiseLevel {
  std::size_t t = 0;
  double alpha_bar = 1.0;
};

inline NoiseLevel noise_level(const NoiseSchedule& s, std::size_t t) {
  return {s.original_timestep(t), s.alpha_bar(t)};
}

/// Noise predictor eps(z_t, t, c). Implementations are pure and thread-safe.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// `c` may be null for unconditioned use.
  virtual LatentVolume predict_noise(const LatentVolume& z_t, NoiseLevel t,
                                     const ConditioningField* c) const = 0;
};

inline LatentVolume predict_noise(const Denoiser& d, const LatentVolume& z_t,
                                  NoiseLevel t, const ConditioningField* c) {
  if (c && c->latent_shape() != z_t.shape()) {
    throw InvalidArgument("predict_noise: conditioning shape " +
                          to_string(c->latent_shape()) +
                          " does not match latent " + to_string(z_t.shape()));
  }
  return d.predict_noise(z_t, t, c);
}

class ZeroDenoiser final : public Denoiser {
 public:
  LatentVolume predict_noise(const LatentVolume& z_t, NoiseLevel,
                             const ConditioningField*) const override {
    return LatentVolume(z_t.channels(), z_t.shape());
  }
};

namespace detail {

inline void require_noisy(double alpha_bar) {
  if (!(alpha_bar < 1.0) || !(alpha_bar > 0.0)) {
    throw InvalidArgument(
        "noise prediction undefined at alpha_bar = " + std::to_string(alpha_bar));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Analytic denoisers for Gaussian data

/// Independent per-element prior z_0 ~ N(mean, variance).
struct GaussianPrior {
  LatentVolume mean;
  LatentVolume variance;

  void validate() const {
    if (!mean.same_layout(variance)) {
      throw InvalidArgument("Gaussian prior: mean and variance layouts differ");
    }
    for (double v : variance.data()) {
      if (!(v > 0.0)) throw InvalidArgument("Gaussian prior: variance must be positive");
    }
  }
};

/// Posterior-optimal noise predictor for an independent Gaussian prior.
///
/// With z_t = sqrt(ab) z_0 + sqrt(1 - ab) eps and z_0 ~ N(mu, s2):
///   E[z_0 | z_t] = (sqrt(ab) s2 z_t + (1 - ab) mu) / (ab s2 + 1 - ab)
///   E[eps | z_t] = (z_t - sqrt(ab) E[z_0 | z_t]) / sqrt(1 - ab)
class GaussianOracleDenoiser final : public Denoiser {
 public:
  explicit GaussianOracleDenoiser(GaussianPrior prior) : prior_(std::move(prior)) {
    prior_.validate();
  }

  LatentVolume predict_noise(const LatentVolume& z_t, NoiseLevel t,
                             const ConditioningField*) const override {
    if (!z_t.same_layout(prior_.mean)) {
      throw InvalidArgument("oracle denoiser: latent layout does not match prior");
    }
    detail::require_noisy(t.alpha_bar);
    const double ab = t.alpha_bar;
    const double sab = std::sqrt(ab);
    const double s1m = std::sqrt(1.0 - ab);
    LatentVolume eps(z_t.channels(), z_t.shape());
    for (std::size_t n = 0; n < z_t.size(); ++n) {
      const double s2 = prior_.variance[n];
      const double mu = prior_.mean[n];
      const double x0 = (sab * s2 * z_t[n] + (1.0 - ab) * mu) /
                        (ab * s2 + 1.0 - ab);
      eps[n] = (z_t[n] - sab * x0) / s1m;
    }
    return eps;
  }

  const GaussianPrior& prior() const noexcept { return prior_; }

 private:
  GaussianPrior prior_;
};

inline std::unique_ptr<Denoiser> gaussian_oracle_denoiser(GaussianPrior prior,
                                                          const NoiseSchedule& s) {
  detail::require(s.steps() >= 1, "oracle denoiser needs a non-empty schedule");
  return std::make_unique<GaussianOracleDenoiser>(std::move(prior));
}

/// Oracle for a jointly Gaussian prior with full covariance over all latent
/// elements (small latents only):
///   E[z_0 | z_t] = mu + sqrt(ab) S (ab S + (1 - ab) I)^-1 (z_t - sqrt(ab) mu)
class DenseGaussianOracleDenoiser final : public Denoiser {
 public:
  DenseGaussianOracleDenoiser(std::size_t channels, Shape3 shape,
                              Eigen::VectorXd mean, Eigen::MatrixXd covariance)
      : channels_(channels), shape_(shape), mean_(std::move(mean)),
        cov_(std::move(covariance)) {
    const auto n = static_cast<Eigen::Index>(channels * shape.size());
    if (mean_.size() != n || cov_.rows() != n || cov_.cols() != n) {
      throw InvalidArgument("dense oracle: mean/covariance size does not match latent");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) {
      throw InvalidArgument("dense oracle: covariance is not positive definite");
    }
  }

  LatentVolume predict_noise(const LatentVolume& z_t, NoiseLevel t,
                             const ConditioningField*) const override {
    if (z_t.channels() != channels_ || z_t.shape() != shape_) {
      throw InvalidArgument("dense oracle: latent layout does not match prior");
    }
    detail::require_noisy(t.alpha_bar);
    const double ab = t.alpha_bar;
    const double sab = std::sqrt(ab);
    const auto n = mean_.size();
    Eigen::Map<const Eigen::VectorXd> z(z_t.data().data(), n);
    Eigen::MatrixXd k = ab * cov_;
    k.diagonal().array() += 1.0 - ab;
    const Eigen::VectorXd w = k.llt().solve(z - sab * mean_);
    const Eigen::VectorXd x0 = mean_ + sab * (cov_ * w);
    const Eigen::VectorXd e = (z - sab * x0) / std::sqrt(1.0 - ab);
    return LatentVolume(channels_, shape_,
                        std::vector<double>(e.data(), e.data() + n));
  }

 private:
  std::size_t channels_;
  Shape3 shape_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
};

// ---------------------------------------------------------------------------
// Trainable affine denoiser
//
//   eps(z, t, c)[ch, v] = (a + g_t) z[ch, v] + sum_k b_k c_k[v] + bias[ch, v]
//
// The conditioning channels enter by feature-wise addition, so the output is
// affine in c and each channel contributes independently.

class AffineDenoiser final : public Denoiser {
 public:
  static constexpr std::size_t kCondChannels = ConditioningField::kChannels;

  AffineDenoiser() = default;

  /// Zero-initialised parameters for latents with the given layout and a
  /// training schedule of `T` steps.
  AffineDenoiser(std::size_t channels, Shape3 shape, std::size_t T)
      : bias_(channels, shape), time_(T + 1, 0.0) {}

  double& weight_z() noexcept { return a_; }
  double weight_z() const noexcept { return a_; }
  std::array<double, kCondChannels>& weight_c() noexcept { return b_; }
  const std::array<double, kCondChannels>& weight_c() const noexcept { return b_; }
  LatentVolume& bias() noexcept { return bias_; }
  const LatentVolume& bias() const noexcept { return bias_; }
  std::vector<double>& time_embedding() noexcept { return time_; }
  const std::vector<double>& time_embedding() const noexcept { return time_; }
  std::size_t steps() const noexcept { return time_.empty() ? 0 : time_.size() - 1; }

  /// All parameters in a fixed order: a, b_0..b_3, g_0..g_T, bias.
  std::size_t parameter_count() const noexcept {
    return 1 + kCondChannels + time_.size() + bias_.size();
  }

  std::vector<double> parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    p.push_back(a_);
    p.insert(p.end(), b_.begin(), b_.end());
    p.insert(p.end(), time_.begin(), time_.end());
    p.insert(p.end(), bias_.data().begin(), bias_.data().end());
    return p;
  }

  void set_parameters(std::span<const double> p) {
    detail::require(p.size() == parameter_count(), "parameter vector has wrong length");
    std::size_t o = 0;
    a_ = p[o++];
    for (double& b : b_) b = p[o++];
    for (double& g : time_) g = p[o++];
    for (double& x : bias_.data()) x = p[o++];
  }

  LatentVolume predict_noise(const LatentVolume& z_t, NoiseLevel t,
                             const ConditioningField* c) const override {
    check(z_t, t, c);
    const double scale = a_ + time_[t.t];
    const std::size_t nv = z_t.voxels();
    LatentVolume out(z_t.channels(), z_t.shape());
    const std::vector<double> cond = condition_term(c, nv);
    for (std::size_t ch = 0; ch < z_t.channels(); ++ch) {
      const auto z = z_t.channel(ch);
      const auto b = bias_.channel(ch);
      auto o = out.channel(ch);
      for (std::size_t v = 0; v < nv; ++v) o[v] = scale * z[v] + cond[v] + b[v];
    }
    return out;
  }

  /// Per-sample loss mean((eps_hat - eps)^2) and its gradient with respect to
  /// parameters() in the same order.
  double loss_and_gradient(const LatentVolume& z_t, NoiseLevel t,
                           const ConditioningField* c, const LatentVolume& eps,
                           std::vector<double>* grad) const {
    const LatentVolume pred = predict_noise(z_t, t, c);
    detail::require(eps.same_layout(z_t), "target noise layout mismatch");
    const double inv_n = 1.0 / static_cast<double>(z_t.size());
    double loss = 0.0;
    if (grad) grad->assign(parameter_count(), 0.0);
    double g_scale = 0.0;
    std::array<double, kCondChannels> g_b{};
    const std::size_t nv = z_t.voxels();
    const std::size_t bias_offset = 1 + kCondChannels + time_.size();
    for (std::size_t ch = 0; ch < z_t.channels(); ++ch) {
      const auto z = z_t.channel(ch);
      const auto p = pred.channel(ch);
      const auto e = eps.channel(ch);
      for (std::size_t v = 0; v < nv; ++v) {
        const double r = p[v] - e[v];
        loss += r * r;
        if (!grad) continue;
        g_scale += r * z[v];
        if (c) {
          for (std::size_t k = 0; k < kCondChannels; ++k) g_b[k] += r * c->channels[k][v];
        }
        (*grad)[bias_offset + ch * nv + v] = 2.0 * inv_n * r;
      }
    }
    if (grad) {
      (*grad)[0] = 2.0 * inv_n * g_scale;
      for (std::size_t k = 0; k < kCondChannels; ++k) (*grad)[1 + k] = 2.0 * inv_n * g_b[k];
      (*grad)[1 + kCondChannels + t.t] = 2.0 * inv_n * g_scale;
    }
    return loss * inv_n;
  }

  nlohmann::json to_json() const {
    return {{"format", "voxdiff-affine-denoiser"},
            {"version", 1},
            {"weight_z", a_},
            {"weight_c", b_},
            {"time_embedding", time_},
            {"bias",
             {{"channels", bias_.channels()},
              {"shape", detail::shape_json(bias_.shape())},
              {"data", std::vector<double>(bias_.data().begin(), bias_.data().end())}}}};
  }

  static AffineDenoiser from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "voxdiff-affine-denoiser") {
        throw ConfigError("not an affine denoiser parameter file");
      }
      AffineDenoiser d;
      d.a_ = j.at("weight_z").get<double>();
      d.b_ = j.at("weight_c").get<std::array<double, kCondChannels>>();
      d.time_ = j.at("time_embedding").get<std::vector<double>>();
      const auto& b = j.at("bias");
      const auto sh = b.at("shape").get<std::array<std::size_t, 3>>();
      d.bias_ = LatentVolume(b.at("channels").get<std::size_t>(),
                             {sh[0], sh[1], sh[2]},
                             b.at("data").get<std::vector<double>>());
      if (d.time_.empty()) throw ConfigError("empty time embedding");
      for (double p : d.parameters()) {
        if (!std::isfinite(p)) throw ConfigError("non-finite denoiser parameter");
      }
      return d;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed denoiser parameters: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("malformed denoiser parameters: ") + e.what());
    }
  }

 private:
  void check(const LatentVolume& z_t, NoiseLevel t, const ConditioningField* c) const {
    if (!z_t.same_layout(bias_)) {
      throw InvalidArgument("affine denoiser: latent layout does not match parameters");
    }
    if (t.t >= time_.size() || t.t == 0) {
      throw InvalidArgument("affine denoiser: timestep " + std::to_string(t.t) +
                            " out of range 1.." + std::to_string(steps()));
    }
    if (c && c->latent_shape() != z_t.shape()) {
      throw InvalidArgument("affine denoiser: conditioning shape mismatch");
    }
  }

  std::vector<double> condition_term(const ConditioningField* c, std::size_t nv) const {
    std::vector<double> out(nv, 0.0);
    if (!c) return out;
    for (std::size_t k = 0; k < kCondChannels; ++k) {
      const auto ck = c->channels[k].data();
      for (std::size_t v = 0; v < nv; ++v) out[v] += b_[k] * ck[v];
    }
    return out;
  }

  double a_ = 0.0;
  std::array<double, kCondChannels> b_{};
  LatentVolume bias_;
  std::vector<double> time_;
};

inline void save_affine_denoiser(const AffineDenoiser& d,
                                 const std::filesystem::path& path) {
  detail::write_files_atomically({{path, detail::to_bytes(d.to_json().dump(1) + "\n")}});
}

inline AffineDenoiser load_affine_denoiser(const std::filesystem::path& path) {
  return AffineDenoiser::from_json(detail::read_json_file(path));
}

struct TrainingSample {
  LatentVolume z0;
  std::optional<ConditioningField> condition;
};

struct TrainingResult {
  AffineDenoiser model;
  std::vector<double> losses;       // per step
  double final_loss = 0.0;          // mean over the last 10% of steps
  double zero_predictor_loss = 0.0; // mean(eps^2) over the same samples
};

/// Stochastic gradient descent on mean((eps_hat(z_t, t, c) - eps)^2), one
/// sample per step, t uniform on 1..T, z_t drawn from the forward marginal.
inline TrainingResult train_affine_denoiser(const std::vector<TrainingSample>& dataset,
                                            const NoiseSchedule& s, std::size_t steps,
                                            double lr, std::uint64_t seed) {
  if (dataset.empty()) throw InvalidArgument("train_affine_denoiser: empty dataset");
  const LatentVolume& first = dataset.front().z0;
  for (const auto& sample : dataset) {
    if (!sample.z0.same_layout(first)) {
      throw InvalidArgument("train_affine_denoiser: latents differ in layout");
    }
  }
  detail::require(std::isfinite(lr) && lr >= 0.0, "learning rate must be finite and >= 0");

  TrainingResult result{AffineDenoiser(first.channels(), first.shape(), s.steps()), {}, 0.0, 0.0};
  AffineDenoiser& model = result.model;
  Rng rng(seed);
  std::vector<double> params = model.parameters();
  std::vector<double> grad;
  const std::size_t tail = std::max<std::size_t>(1, steps / 10);
  double tail_loss = 0.0;
  double tail_zero = 0.0;

  LatentVolume eps(first.channels(), first.shape());
  LatentVolume z_t(first.channels(), first.shape());
  for (std::size_t step = 0; step < steps; ++step) {
    const auto& sample = dataset[rng.uniform_int(0, dataset.size() - 1)];
    const std::size_t t = rng.uniform_int(1, s.steps());
    rng.fill_normal(eps.data());
    const double sab = std::sqrt(s.alpha_bar(t));
    const double s1m = std::sqrt(1.0 - s.alpha_bar(t));
    for (std::size_t n = 0; n < z_t.size(); ++n) {
      z_t[n] = sab * sample.z0[n] + s1m * eps[n];
    }
    const ConditioningField* c = sample.condition ? &*sample.condition : nullptr;
    const double loss = model.loss_and_gradient(z_t, noise_level(s, t), c, eps, &grad);
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged at step " + std::to_string(step) +
                         " (t = " + std::to_string(t) + ", lr = " + std::to_string(lr) +
                         "); lower the learning rate");
    }
    result.losses.push_back(loss);
    if (step + tail >= steps) {
      tail_loss += loss;
      double e2 = 0.0;
      for (double e : eps.data()) e2 += e * e;
      tail_zero += e2 / static_cast<double>(eps.size());
    }
    if (lr != 0.0) {
      for (std::size_t p = 0; p < params.size(); ++p) params[p] -= lr * grad[p];
      model.set_parameters(params);
    }
  }
  if (steps > 0) {
    const std::size_t n_tail = std::min(tail, steps);
    result.final_loss = tail_loss / static_cast<double>(n_tail);
    result.zero_predictor_loss = tail_zero / static_cast<double>(n_tail);
  }
  return result;
}

}  // namespace voxdiff
