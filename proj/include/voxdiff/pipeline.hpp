#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "voxdiff/codec.hpp"
#include "voxdiff/condition.hpp"
#include "voxdiff/denoiser.hpp"
#include "voxdiff/error.hpp"
#include "voxdiff/latent.hpp"
#include "voxdiff/postprocess.hpp"
#include "voxdiff/sampler.hpp"
#include "voxdiff/schedule.hpp"
#include "voxdiff/volume.hpp"
#include "voxdiff/volume_io.hpp"

namespace voxdiff {

struct ScheduleConfig {
  std::size_t T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  NoiseSchedule build() const { return linear_beta_schedule(T, beta_start, beta_end); }
};

enum class InpaintMode {
  healthy,  // tumor concentration zeroed
  tumor,    // concentration kept as provided
};

/// Which noise predictor to run and where its parameters come from.
struct DenoiserSpec {
  std::string kind = "gaussian";  // gaussian | affine | zero
  double prior_mean = 0.0;
  double prior_variance = 1.0;
  std::string prior_mean_path;      // optional latent stacks overriding the scalars
  std::string prior_variance_path;
  std::string params_path;          // affine parameter file
};

inline std::unique_ptr<Denoiser> make_denoiser(const DenoiserSpec& spec, std::size_t channels,
                                               const Shape3& latent_shape,
                                               const NoiseSchedule& schedule) {
  if (spec.kind == "zero") return std::make_unique<ZeroDenoiser>();
  if (spec.kind == "gaussian") {
    GaussianPrior prior{LatentVolume(channels, latent_shape, spec.prior_mean),
                        LatentVolume(channels, latent_shape, spec.prior_variance)};
    if (!spec.prior_mean_path.empty()) prior.mean = read_latent(spec.prior_mean_path);
    if (!spec.prior_variance_path.empty()) prior.variance = read_latent(spec.prior_variance_path);
    if (prior.mean.channels() != channels || prior.mean.shape() != latent_shape ||
        !prior.mean.same_layout(prior.variance)) {
      throw ConfigError("Gaussian prior layout does not match the latent grid " +
                        to_string(latent_shape));
    }
    try {
      return gaussian_oracle_denoiser(std::move(prior), schedule);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  if (spec.kind == "affine") {
    if (spec.params_path.empty()) throw ConfigError("affine denoiser needs a parameter file");
    auto d = std::make_unique<AffineDenoiser>(load_affine_denoiser(spec.params_path));
    if (d->bias().channels() != channels || d->bias().shape() != latent_shape) {
      throw ConfigError("affine denoiser parameters do not match the latent grid " +
                        to_string(latent_shape));
    }
    if (d->steps() != schedule.steps()) {
      throw ConfigError("affine denoiser was trained with a different schedule length");
    }
    return d;
  }
  throw ConfigError("unknown denoiser kind '" + spec.kind + "'");
}

struct PipelineOptions {
  std::string codec = "block";
  std::size_t pad_multiple = 16;
  std::optional<Shape3> pad_shape;
  bool normalize = true;
  InpaintMode mode = InpaintMode::healthy;
  ScheduleConfig schedule;
  SamplerConfig sampler;
  DenoiserSpec denoiser;
  bool postprocess = true;
  PostprocessConfig post;
};

/// Conditioning sources; at most one of (tissue + tumor) or a prebuilt field.
struct ConditionInputs {
  const Volume3* tissue = nullptr;  // integer labels, image resolution
  const Volume3* tumor = nullptr;   // concentration in [0, 1], image resolution
  const ConditioningField* prebuilt = nullptr;
};

struct PipelineResult {
  Volume3 image;
  LatentVolume latent;
  std::size_t plan_length = 0;
  Shape3 padded_shape;
  BlendReport blend;
};

namespace detail {

inline Shape3 padded_shape_for(const Shape3& s, const PipelineOptions& opt,
                               const LatentCodec& codec) {
  Shape3 p = opt.pad_shape ? *opt.pad_shape : round_up_shape(s, opt.pad_multiple);
  if (p.nx % codec.factor() || p.ny % codec.factor() || p.nz % codec.factor()) {
    throw ConfigError("padded shape " + to_string(p) + " is not divisible by the codec factor");
  }
  if (p.nx < s.nx || p.ny < s.ny || p.nz < s.nz) {
    throw ConfigError("pad shape " + to_string(p) + " is smaller than the image " + to_string(s));
  }
  return p;
}

inline std::optional<ConditioningField> resolve_condition(const ConditionInputs& in,
                                                          const Shape3& padded,
                                                          const Shape3& latent_shape,
                                                          std::size_t factor,
                                                          InpaintMode mode) {
  std::optional<ConditioningField> c;
  if (in.prebuilt) {
    c = *in.prebuilt;
  } else if (in.tissue || in.tumor) {
    if (!in.tissue) throw ConfigError("tumor concentration given without tissue labels");
    const Volume3 zero(in.tissue->shape(), 0.0, in.tissue->spacing());
    const Volume3& tumor = in.tumor ? *in.tumor : zero;
    c = build_condition(pad_to(*in.tissue, padded), pad_to(tumor, padded), factor);
  }
  if (!c) return c;
  if (c->latent_shape() != latent_shape) {
    throw ConfigError("conditioning grid " + to_string(c->latent_shape()) +
                      " does not match latent grid " + to_string(latent_shape));
  }
  if (mode == InpaintMode::healthy) c = zero_tumor(*c);
  return c;
}

}  // namespace detail

/// read -> normalise -> pad -> encode -> condition -> resampled inpainting ->
/// decode -> crop -> harmonise. `region` marks voxels to inpaint (1).
inline PipelineResult run_inpaint(const Volume3& image, const MaskVolume& region,
                                  const ConditionInputs& cond, const PipelineOptions& opt,
                                  const Volume3* reference = nullptr) {
  if (region.shape() != image.shape()) {
    throw InvalidArgument("mask shape " + to_string(region.shape()) +
                          " does not match image " + to_string(image.shape()));
  }
  if (!is_binary(region)) throw InvalidArgument("mask is not binary");
  const auto codec = make_codec(opt.codec);
  const Volume3 x = opt.normalize ? normalize_intensity(image) : image;
  const Shape3 padded = detail::padded_shape_for(x.shape(), opt, *codec);

  const LatentVolume z0 = codec->encode(pad_to(x, padded));
  const MaskVolume known_img = pad_to(invert(region), padded, std::uint8_t{1});
  const MaskVolume known_lat = downsample_all(known_img, codec->factor());

  const NoiseSchedule schedule = opt.schedule.build();
  const auto condition =
      detail::resolve_condition(cond, padded, z0.shape(), codec->factor(), opt.mode);
  const auto denoiser = make_denoiser(opt.denoiser, z0.channels(), z0.shape(), schedule);

  PipelineResult res;
  res.padded_shape = padded;
  res.plan_length = repaint_plan(opt.sampler.T_sample == 0 ? schedule.steps() : opt.sampler.T_sample,
                                 opt.sampler.jump_length, opt.sampler.n_resample)
                        .transitions.size();
  res.latent = repaint_inpaint(z0, known_lat, *denoiser, condition ? &*condition : nullptr,
                               schedule, opt.sampler);
  Volume3 generated = crop_to(codec->decode(res.latent), x.shape());
  generated.set_spacing(x.spacing());
  if (opt.postprocess && (opt.post.blend || opt.post.match)) {
    res.image = harmonize(x, generated, region, reference, opt.post, &res.blend);
  } else {
    res.image = composite(x, generated, region);
  }
  res.image.set_intensity_range(x.intensity_range());
  return res;
}

/// Generation with no known voxels, guided only by the conditioning.
inline PipelineResult run_synth(const Shape3& shape, const Spacing3& spacing,
                                const ConditionInputs& cond, const PipelineOptions& opt) {
  const auto codec = make_codec(opt.codec);
  const Shape3 padded = detail::padded_shape_for(shape, opt, *codec);
  const Shape3 latent_shape{padded.nx / codec->factor(), padded.ny / codec->factor(),
                            padded.nz / codec->factor()};
  const LatentVolume z0(codec->channels(), latent_shape);
  const MaskVolume known(latent_shape, 0);
  const NoiseSchedule schedule = opt.schedule.build();
  const auto condition =
      detail::resolve_condition(cond, padded, latent_shape, codec->factor(), opt.mode);
  const auto denoiser = make_denoiser(opt.denoiser, z0.channels(), latent_shape, schedule);

  PipelineResult res;
  res.padded_shape = padded;
  res.plan_length = repaint_plan(opt.sampler.T_sample == 0 ? schedule.steps() : opt.sampler.T_sample,
                                 opt.sampler.jump_length, opt.sampler.n_resample)
                        .transitions.size();
  res.latent = repaint_inpaint(z0, known, *denoiser, condition ? &*condition : nullptr,
                               schedule, opt.sampler);
  res.image = crop_to(codec->decode(res.latent), shape);
  res.image.set_spacing(spacing);
  return res;
}

}  // namespace voxdiff
