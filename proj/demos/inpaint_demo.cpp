// Inpaints a spherical hole in a synthetic two-tissue volume and reports
// masked metrics before and after harmonisation.

#include <cmath>
#include <cstdio>

#include "voxdiff/evalkit.hpp"
#include "voxdiff/pipeline.hpp"

int main() {
  using namespace voxdiff;
  const Shape3 shape{32, 32, 32};
  Volume3 image(shape, 0.0);
  Volume3 tissue(shape, 0.0);
  MaskVolume region(shape, 0);
  for (std::size_t k = 0; k < shape.nz; ++k)
    for (std::size_t j = 0; j < shape.ny; ++j)
      for (std::size_t i = 0; i < shape.nx; ++i) {
        const double dx = i - 15.5, dy = j - 15.5, dz = k - 15.5;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (r < 14) {
          image(i, j, k) = (r < 8 ? 0.9 : 0.5) + 0.05 * std::sin(0.7 * i) + 0.03 * std::cos(0.5 * k);
          tissue(i, j, k) = r < 8 ? 3 : 2;
        }
        const double hx = i - 12.0, hy = j - 16.0, hz = k - 16.0;
        if (hx * hx + hy * hy + hz * hz < 16) region(i, j, k) = 1;
      }

  PipelineOptions opt;
  opt.codec = "identity";
  opt.sampler.T_sample = 50;
  opt.sampler.jump_length = 5;
  opt.sampler.n_resample = 3;
  opt.sampler.seed = 7;
  opt.denoiser.prior_mean = 0.9;
  opt.denoiser.prior_variance = 0.01;

  const ConditionInputs cond{&tissue, nullptr, nullptr};
  opt.postprocess = false;
  const PipelineResult raw = run_inpaint(image, region, cond, opt);
  opt.postprocess = true;
  const PipelineResult post = run_inpaint(image, region, cond, opt);

  const MetricEntry a = masked_metrics(raw.image, image, region);
  const MetricEntry b = masked_metrics(post.image, image, region);
  std::printf("transitions %zu, padded %s\n", raw.plan_length, to_string(raw.padded_shape).c_str());
  std::printf("raw        ssim %.4f psnr %.2f mae %.4f\n", a.ssim, a.psnr, a.mae);
  std::printf("harmonised ssim %.4f psnr %.2f mae %.4f (cg %zu iters)\n", b.ssim, b.psnr, b.mae,
              post.blend.iterations);
}
