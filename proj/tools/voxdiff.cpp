// voxdiff: command-line front end for the volumetric diffusion inpainting
// library. Every subcommand is deterministic given its inputs and seed.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "cli_common.hpp"

namespace voxdiff::cli {
namespace {

// --- shared option groups -----------------------------------------------------

struct ScheduleOpts {
  ScheduleConfig cfg;
  void add(CLI::App* app) {
    app->add_option("--T", cfg.T, "training schedule length")->capture_default_str();
    app->add_option("--beta-start", cfg.beta_start, "first beta")->capture_default_str();
    app->add_option("--beta-end", cfg.beta_end, "last beta")->capture_default_str();
  }
};

struct SamplerOpts {
  SamplerConfig cfg;
  bool no_dilate = false;
  void add(CLI::App* app) {
    app->add_option("--T-sample", cfg.T_sample, "respaced sampling steps (0 = T)")->capture_default_str();
    app->add_option("--jump", cfg.jump_length, "resampling jump length")->capture_default_str();
    app->add_option("--resample", cfg.n_resample, "resampling repetitions per jump")->capture_default_str();
    app->add_option("--eta", cfg.eta, "noise scale in [0,1] (1 = ancestral)")->capture_default_str();
    app->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    app->add_flag("--no-dilate", no_dilate, "do not grow the unknown region before sampling");
  }
  SamplerConfig resolved() const {
    SamplerConfig c = cfg;
    c.dilate_unknown = !no_dilate;
    return c;
  }
};

struct DenoiserOpts {
  DenoiserSpec spec;
  void add(CLI::App* app) {
    app->add_option("--denoiser", spec.kind, "gaussian | affine | zero")
        ->check(CLI::IsMember({"gaussian", "affine", "zero"}))
        ->capture_default_str();
    app->add_option("--prior-mean", spec.prior_mean, "Gaussian prior mean (latent space)")->capture_default_str();
    app->add_option("--prior-var", spec.prior_variance, "Gaussian prior variance")->capture_default_str();
    app->add_option("--prior-mean-file", spec.prior_mean_path, "latent stack overriding --prior-mean");
    app->add_option("--prior-var-file", spec.prior_variance_path, "latent stack overriding --prior-var");
    app->add_option("--params", spec.params_path, "affine denoiser parameter file");
  }
};

struct PostOpts {
  PostprocessConfig cfg;
  std::string order = "he-first";
  void add(CLI::App* app) {
    app->add_flag("--blend,!--no-blend", cfg.blend, "Poisson blending")->capture_default_str();
    app->add_flag("--match,!--no-match", cfg.match, "histogram matching")->capture_default_str();
    app->add_option("--order", order, "he-first | pb-first")
        ->check(CLI::IsMember({"he-first", "pb-first"}))
        ->capture_default_str();
    app->add_option("--cg-tol", cfg.blend_cfg.cg_tolerance, "CG relative residual bound")->capture_default_str();
    app->add_option("--cg-max-iters", cfg.blend_cfg.cg_max_iters, "CG iteration cap (0 = automatic)")->capture_default_str();
    app->add_option("--black-threshold", cfg.hist_cfg.black_threshold, "voxels <= threshold are background")->capture_default_str();
    app->add_option("--bins", cfg.hist_cfg.bins, "histogram bins")->capture_default_str();
    app->add_flag("--exact-quantiles", cfg.hist_cfg.exact, "exact empirical quantile mapping");
  }
  PostprocessConfig resolved() const {
    PostprocessConfig c = cfg;
    c.order = order == "pb-first" ? PostprocessOrder::pb_first : PostprocessOrder::he_first;
    return c;
  }
};

struct ConditionOpts {
  std::string tissue, tumor, condition, mode = "healthy";
  void add(CLI::App* app) {
    app->add_option("--tissue", tissue, "tissue label volume (0 bg, 1 CSF, 2 GM, 3 WM)");
    app->add_option("--tumor", tumor, "tumor concentration volume in [0,1]");
    app->add_option("--condition", condition, "prebuilt conditioning stack at latent resolution")
        ->excludes(app->get_option("--tissue"));
    app->add_option("--mode", mode, "healthy (zero tumor concentration) | tumor")
        ->check(CLI::IsMember({"healthy", "tumor"}))
        ->capture_default_str();
  }
};

struct LoadedCondition {
  std::optional<Volume3> tissue, tumor;
  std::optional<ConditioningField> prebuilt;

  ConditionInputs inputs() const {
    return {tissue ? &*tissue : nullptr, tumor ? &*tumor : nullptr,
            prebuilt ? &*prebuilt : nullptr};
  }
};

LoadedCondition load_condition(const std::string& tissue, const std::string& tumor,
                               const std::string& condition, RunManifest& m) {
  LoadedCondition c;
  if (!tissue.empty()) { c.tissue = read_volume(tissue); m.input("tissue", tissue); }
  if (!tumor.empty()) { c.tumor = read_volume(tumor); m.input("tumor", tumor); }
  if (!condition.empty()) { c.prebuilt = read_condition(condition); m.input("condition", condition); }
  return c;
}

// --- inpaint -------------------------------------------------------------------

struct InpaintCmd {
  std::string image, mask, out, manifest, reference, batch, codec = "block", pad_shape_str;
  std::size_t pad_multiple = 16;
  std::vector<std::size_t> pad_shape;
  bool no_postprocess = false;
  ScheduleOpts schedule;
  SamplerOpts sampler;
  DenoiserOpts denoiser;
  PostOpts post;
  ConditionOpts cond;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("inpaint", "inpaint the masked region of a volume");
    app->add_option("--image", image, "input volume (.nii or f32-raw)");
    app->add_option("--mask", mask, "region to inpaint (1 = unknown)");
    app->add_option("--out", out, "output volume");
    app->add_option("--manifest", manifest, "run manifest path (default <out>.manifest.json)");
    app->add_option("--reference", reference, "volume whose non-black intensities guide histogram matching");
    app->add_option("--batch", batch, "JSON list of subjects to process");
    app->add_option("--codec", codec, "block | identity")
        ->check(CLI::IsMember({"block", "identity"}))
        ->capture_default_str();
    app->add_option("--pad-multiple", pad_multiple, "pad each axis up to a multiple of this")->capture_default_str();
    app->add_option("--pad-shape", pad_shape, "explicit padded shape nx,ny,nz")->delimiter(',')->expected(3);
    app->add_flag("--no-postprocess", no_postprocess, "skip histogram matching and blending");
    schedule.add(app);
    sampler.add(app);
    denoiser.add(app);
    post.add(app);
    cond.add(app);
    return app;
  }

  PipelineOptions options() const {
    PipelineOptions o;
    o.codec = codec;
    o.pad_multiple = pad_multiple;
    if (!pad_shape.empty()) o.pad_shape = parse_shape(pad_shape, "--pad-shape");
    o.mode = cond.mode == "tumor" ? InpaintMode::tumor : InpaintMode::healthy;
    o.schedule = schedule.cfg;
    o.sampler = sampler.resolved();
    o.denoiser = denoiser.spec;
    o.postprocess = !no_postprocess;
    o.post = post.resolved();
    return o;
  }

  struct Subject {
    std::string id, image, mask, out, tissue, tumor, condition, reference, manifest;
  };

  int run_subject(const Subject& s, PipelineOptions opt, const CLI::App& app) const {
    RunManifest m("inpaint", app);
    const Volume3 img = read_volume(s.image);
    m.input("image", s.image);
    const MaskVolume region = read_mask(s.mask);
    m.input("mask", s.mask);
    const auto c = load_condition(s.tissue, s.tumor, s.condition, m);
    std::optional<Volume3> ref;
    if (!s.reference.empty()) { ref = read_volume(s.reference); m.input("reference", s.reference); }
    const PipelineResult r = run_inpaint(img, region, c.inputs(), opt, ref ? &*ref : nullptr);
    write_volume(r.image, s.out);
    m.output(s.out);
    m["subject"] = s.id;
    m["seed"] = opt.sampler.seed;
    m["plan_length"] = r.plan_length;
    m["padded_shape"] = {r.padded_shape.nx, r.padded_shape.ny, r.padded_shape.nz};
    m["blend"] = {{"unknowns", r.blend.unknowns}, {"iterations", r.blend.iterations},
                  {"relative_residual", r.blend.relative_residual}};
    m.write(s.manifest.empty() ? default_manifest_path(s.out) : fs::path(s.manifest));
    return kOk;
  }

  int run(const CLI::App& app) const {
    const PipelineOptions opt = options();
    if (batch.empty()) {
      if (image.empty() || mask.empty() || out.empty()) {
        throw ConfigError("inpaint needs --image, --mask and --out (or --batch)");
      }
      return run_subject({"", image, mask, out, cond.tissue, cond.tumor, cond.condition,
                          reference, manifest},
                         opt, app);
    }
    return run_batch(opt, app);
  }

  int run_batch(const PipelineOptions& opt, const CLI::App& app) const {
    const json j = voxdiff::detail::read_json_file(batch);
    std::vector<Subject> subjects;
    try {
      for (const auto& e : j.at("subjects")) {
        subjects.push_back({e.at("id").get<std::string>(), e.at("image").get<std::string>(),
                            e.at("mask").get<std::string>(), e.at("out").get<std::string>(),
                            e.value("tissue", ""), e.value("tumor", ""), e.value("condition", ""),
                            e.value("reference", ""), e.value("manifest", "")});
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed batch manifest: ") + e.what());
    }
    const std::size_t workers = std::min(worker_cap(), std::max<std::size_t>(1, subjects.size()));
    std::atomic<std::size_t> next{0};
    std::vector<int> codes(subjects.size(), kOk);
    std::mutex err_mu;
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < subjects.size();) {
        PipelineOptions o = opt;
        o.sampler.seed = Rng(opt.sampler.seed, i).engine()();
        try {
          codes[i] = run_subject(subjects[i], o, app);
        } catch (const Error& e) {
          std::lock_guard lock(err_mu);
          std::cerr << "voxdiff: subject " << subjects[i].id << ": " << e.what() << "\n";
          codes[i] = exit_code_for(e.kind());
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    int rc = kOk;
    for (int c : codes) rc = std::max(rc, c);
    return rc;
  }
};

// --- synth -----------------------------------------------------------------------

struct SynthCmd {
  std::string out, like, codec = "block";
  std::vector<std::size_t> shape;
  std::vector<double> spacing{1.0, 1.0, 1.0};
  std::size_t pad_multiple = 16;
  ScheduleOpts schedule;
  SamplerOpts sampler;
  DenoiserOpts denoiser;
  ConditionOpts cond;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("synth", "generate a volume from the conditioning alone");
    app->add_option("--out", out, "output volume")->required();
    app->add_option("--shape", shape, "output shape nx,ny,nz")->delimiter(',')->expected(3);
    app->add_option("--spacing", spacing, "voxel spacing")->delimiter(',')->expected(3);
    app->add_option("--like", like, "take shape and spacing from this volume");
    app->add_option("--codec", codec, "block | identity")
        ->check(CLI::IsMember({"block", "identity"}))
        ->capture_default_str();
    app->add_option("--pad-multiple", pad_multiple, "pad each axis up to a multiple of this")->capture_default_str();
    schedule.add(app);
    sampler.add(app);
    denoiser.add(app);
    cond.add(app);
    return app;
  }

  int run(const CLI::App& app) const {
    RunManifest m("synth", app);
    Shape3 s;
    Spacing3 sp{spacing.at(0), spacing.at(1), spacing.at(2)};
    if (!like.empty()) {
      const Volume3 v = read_volume(like);
      m.input("like", like);
      s = v.shape();
      sp = v.spacing();
    } else {
      if (shape.empty()) throw ConfigError("synth needs --shape or --like");
      s = parse_shape(shape, "--shape");
    }
    PipelineOptions o;
    o.codec = codec;
    o.pad_multiple = pad_multiple;
    o.mode = cond.mode == "tumor" ? InpaintMode::tumor : InpaintMode::healthy;
    o.schedule = schedule.cfg;
    o.sampler = sampler.resolved();
    o.denoiser = denoiser.spec;
    const auto c = load_condition(cond.tissue, cond.tumor, cond.condition, m);
    const PipelineResult r = run_synth(s, sp, c.inputs(), o);
    write_volume(r.image, out);
    m.output(out);
    m["seed"] = o.sampler.seed;
    m["plan_length"] = r.plan_length;
    m.write(default_manifest_path(out));
    return kOk;
  }
};

// --- train-denoiser --------------------------------------------------------------

struct TrainCmd {
  std::string manifest, out;
  std::size_t steps = 20000;
  double lr = 0.05;
  std::uint64_t seed = 0;
  ScheduleOpts schedule;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("train-denoiser", "fit the affine noise predictor");
    app->add_option("--manifest", manifest, "JSON list of latent/condition pairs")->required();
    app->add_option("--out", out, "parameter file to write")->required();
    app->add_option("--steps", steps, "SGD steps")->capture_default_str();
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--seed", seed, "random seed")->capture_default_str();
    schedule.add(app);
    return app;
  }

  int run(const CLI::App& app) const {
    RunManifest m("train-denoiser", app);
    const json j = voxdiff::detail::read_json_file(manifest);
    m.input("manifest", manifest);
    std::vector<TrainingSample> data;
    try {
      const fs::path base = fs::path(manifest).parent_path();
      const auto resolve = [&](const std::string& p) {
        const fs::path q(p);
        return q.is_absolute() ? q : base / q;
      };
      for (const auto& e : j.at("pairs")) {
        TrainingSample s{read_latent(resolve(e.at("latent").get<std::string>())), std::nullopt};
        if (e.contains("condition") && !e["condition"].is_null()) {
          s.condition = read_condition(resolve(e["condition"].get<std::string>()));
        }
        data.push_back(std::move(s));
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("malformed training manifest: ") + e.what());
    }
    const TrainingResult r = train_affine_denoiser(data, schedule.cfg.build(), steps, lr, seed);
    if (r.final_loss > r.zero_predictor_loss) {
      throw NumericError("training loss " + std::to_string(r.final_loss) +
                         " did not beat the zero predictor (" +
                         std::to_string(r.zero_predictor_loss) + ")");
    }
    save_affine_denoiser(r.model, out);
    m.output(out);
    m["final_loss"] = r.final_loss;
    m["zero_predictor_loss"] = r.zero_predictor_loss;
    m.write(default_manifest_path(out));
    std::cout << "final loss " << r.final_loss << " (zero predictor " << r.zero_predictor_loss
              << ")\n";
    return kOk;
  }
};

// --- postprocess -----------------------------------------------------------------

struct PostprocessCmd {
  std::string target, generated, mask, reference, out;
  PostOpts post;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("postprocess", "histogram matching and Poisson blending");
    app->add_option("--target", target, "known image")->required();
    app->add_option("--generated", generated, "generated image")->required();
    app->add_option("--mask", mask, "inpainted region (1)")->required();
    app->add_option("--reference", reference, "intensity reference (default: known context)");
    app->add_option("--out", out, "output volume")->required();
    post.add(app);
    return app;
  }

  int run(const CLI::App& app) const {
    RunManifest m("postprocess", app);
    const Volume3 t = read_volume(target);
    m.input("target", target);
    const Volume3 g = read_volume(generated);
    m.input("generated", generated);
    const MaskVolume region = read_mask(mask);
    m.input("mask", mask);
    std::optional<Volume3> ref;
    if (!reference.empty()) { ref = read_volume(reference); m.input("reference", reference); }
    BlendReport rep;
    Volume3 r = harmonize(t, g, region, ref ? &*ref : nullptr, post.resolved(), &rep);
    if (t.has_declared_range()) r.set_intensity_range(t.intensity_range());
    write_volume(r, out);
    m.output(out);
    m["blend"] = {{"unknowns", rep.unknowns}, {"iterations", rep.iterations},
                  {"relative_residual", rep.relative_residual}};
    m.write(default_manifest_path(out));
    return kOk;
  }
};

// --- evaluate --------------------------------------------------------------------

struct EvaluateCmd {
  std::string pred, gt, mask, tumor_mask, subject = "subject", batch, csv, json_out,
      reference_table;
  std::size_t ssim_window = 7;
  bool sample_std = false;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("evaluate", "masked-region image quality metrics");
    app->add_option("--pred", pred, "inpainted volume");
    app->add_option("--gt", gt, "ground truth volume");
    app->add_option("--mask", mask, "healthy evaluation region (1)");
    app->add_option("--tumor-mask", tumor_mask, "tumor evaluation region (1)");
    app->add_option("--subject", subject, "subject id")->capture_default_str();
    app->add_option("--batch", batch, "JSON list of subjects");
    app->add_option("--csv", csv, "CSV report path");
    app->add_option("--json", json_out, "JSON report path");
    app->add_option("--reference-table", reference_table, "echo reference values: healthy | tumor")
        ->check(CLI::IsMember({"healthy", "tumor"}));
    app->add_option("--ssim-window", ssim_window, "SSIM cube edge (odd)")->capture_default_str();
    app->add_flag("--sample-std", sample_std, "use the n-1 standard deviation");
    return app;
  }

  struct Subject {
    std::string id, pred, gt, mask, tumor_mask;
  };

  int run(const CLI::App& app) const {
    RunManifest m("evaluate", app);
    std::vector<Subject> subjects;
    if (!batch.empty()) {
      const json j = voxdiff::detail::read_json_file(batch);
      m.input("batch", batch);
      try {
        for (const auto& e : j.at("subjects")) {
          subjects.push_back({e.at("id").get<std::string>(), e.at("pred").get<std::string>(),
                              e.at("gt").get<std::string>(), e.at("mask").get<std::string>(),
                              e.value("tumor_mask", "")});
        }
      } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed evaluation manifest: ") + e.what());
      }
    } else {
      if (pred.empty() || gt.empty() || mask.empty()) {
        throw ConfigError("evaluate needs --pred, --gt and --mask (or --batch)");
      }
      subjects.push_back({subject, pred, gt, mask, tumor_mask});
    }
    MetricConfig mc;
    mc.ssim_window = ssim_window;
    std::vector<MetricEntry> healthy, tumor, pooled;
    for (const auto& s : subjects) {
      const Volume3 p = read_volume(s.pred);
      const Volume3 g = read_volume(s.gt);
      const MaskVolume h = read_mask(s.mask);
      m.input(s.id + ".pred", s.pred);
      m.input(s.id + ".gt", s.gt);
      m.input(s.id + ".mask", s.mask);
      MetricEntry e = masked_metrics(p, g, h, mc);
      e.subject = s.id;
      healthy.push_back(e);
      if (!s.tumor_mask.empty()) {
        const MaskVolume t = read_mask(s.tumor_mask);
        m.input(s.id + ".tumor_mask", s.tumor_mask);
        MetricEntry et = masked_metrics(p, g, t, mc);
        et.subject = s.id;
        tumor.push_back(et);
        MaskVolume u = h;
        for (std::size_t n = 0; n < u.size(); ++n) u[n] = h[n] || t[n];
        MetricEntry ep = masked_metrics(p, g, u, mc);
        ep.subject = s.id;
        pooled.push_back(ep);
      }
    }
    const auto conv = sample_std ? StdConvention::sample : StdConvention::population;
    json report = json::object();
    std::string csv_text;
    const auto emit = [&](const char* region, std::vector<MetricEntry> entries) {
      if (entries.empty()) return;
      const MetricReport r = aggregate_report(std::move(entries), conv);
      report[region] = to_json(r);
      std::istringstream lines(to_csv(r));
      std::string line;
      bool header = true;
      while (std::getline(lines, line)) {
        if (header) {
          if (csv_text.empty()) csv_text += "region," + line + "\n";
          header = false;
          continue;
        }
        csv_text += std::string(region) + "," + line + "\n";
      }
    };
    emit("healthy", healthy);
    emit("tumor", tumor);
    emit("pooled", pooled);
    if (!reference_table.empty()) {
      const auto& rows = reference_table == "tumor" ? kReferenceTumor : kReferenceHealthy;
      json ref = json::object();
      for (const auto& row : rows) {
        ref[row.metric] = {{"mean", row.mean}, {"median", row.median}, {"std", row.std}};
      }
      report["reference"] = {{"task", reference_table}, {"values", ref}};
      std::string mean_row = "reference," + reference_table + "-mean";
      for (const auto& row : rows) mean_row += "," + std::to_string(row.mean);
      csv_text += mean_row + "\n";
    }
    if (!csv.empty()) {
      voxdiff::detail::write_files_atomically({{csv, voxdiff::detail::to_bytes(csv_text)}});
      m.output(csv);
    }
    if (!json_out.empty()) {
      voxdiff::detail::write_files_atomically(
          {{json_out, voxdiff::detail::to_bytes(report.dump(2) + "\n")}});
      m.output(json_out);
    }
    if (csv.empty() && json_out.empty()) std::cout << csv_text;
    if (!csv.empty()) m.write(default_manifest_path(csv));
    else if (!json_out.empty()) m.write(default_manifest_path(json_out));
    return kOk;
  }
};

// --- maskgen ---------------------------------------------------------------------

struct MaskgenCmd {
  std::string gt, tumor_seg, out_tumor, out_healthy;
  std::vector<double> semi_axes{8.0, 8.0, 8.0};
  MaskSpec spec;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("maskgen", "tumor and random healthy evaluation masks");
    app->add_option("--gt", gt, "ground truth volume")->required();
    app->add_option("--tumor-seg", tumor_seg, "tumor segmentation (non-zero = tumor)")->required();
    app->add_option("--out-tumor", out_tumor, "tumor mask output")->required();
    app->add_option("--out-healthy", out_healthy, "healthy mask output")->required();
    app->add_option("--semi-axes", semi_axes, "ellipsoid semi-axes in voxels")->delimiter(',')->expected(3);
    app->add_option("--seed", spec.seed, "random seed")->capture_default_str();
    app->add_option("--tumor-dilation", spec.tumor_dilation, "dilation iterations for the tumor mask")->capture_default_str();
    app->add_option("--max-attempts", spec.max_attempts, "placement attempts before giving up")->capture_default_str();
    app->add_option("--black-threshold", spec.black_threshold, "background threshold")->capture_default_str();
    return app;
  }

  int run(const CLI::App& app) const {
    RunManifest m("maskgen", app);
    const Volume3 g = read_volume(gt);
    m.input("gt", gt);
    const MaskVolume seg = threshold_mask(read_volume(tumor_seg), 0.0);
    m.input("tumor_seg", tumor_seg);
    MaskSpec s = spec;
    s.semi_axes = {semi_axes.at(0), semi_axes.at(1), semi_axes.at(2)};
    MaskPair pair = generate_masks(g, seg, s);
    pair.tumor.set_spacing(g.spacing());
    pair.healthy.set_spacing(g.spacing());
    write_mask(pair.tumor, out_tumor);
    write_mask(pair.healthy, out_healthy);
    m.output(out_tumor);
    m.output(out_healthy);
    m["seed"] = s.seed;
    m["healthy_voxels"] = count_ones(pair.healthy);
    m["tumor_voxels"] = count_ones(pair.tumor);
    m.write(default_manifest_path(out_healthy));
    return kOk;
  }
};

// --- schedule-dump ---------------------------------------------------------------

struct ScheduleDumpCmd {
  ScheduleOpts schedule;
  std::size_t T_sample = 0, jump = 10, resample = 10;
  std::string out, plan_out;

  CLI::App* add(CLI::App& root) {
    auto* app = root.add_subcommand("schedule-dump", "write schedule tables and the resampling plan as CSV");
    schedule.add(app);
    app->add_option("--T-sample", T_sample, "respace to this many steps (0 = no respacing)")->capture_default_str();
    app->add_option("--jump", jump, "jump length for the plan")->capture_default_str();
    app->add_option("--resample", resample, "resampling repetitions for the plan")->capture_default_str();
    app->add_option("--out", out, "schedule CSV (default stdout)");
    app->add_option("--plan-out", plan_out, "plan CSV");
    return app;
  }

  int run(const CLI::App&) const {
    NoiseSchedule s = schedule.cfg.build();
    if (T_sample > 0) s = subsample_schedule(s, T_sample);
    std::string csv = "t,original_t,beta,alpha,alpha_bar\n";
    char buf[160];
    for (std::size_t t = 1; t <= s.steps(); ++t) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g\n", t, s.original_timestep(t),
                    s.beta(t), s.alpha(t), s.alpha_bar(t));
      csv += buf;
    }
    if (out.empty()) {
      std::cout << csv;
    } else {
      voxdiff::detail::write_files_atomically({{out, voxdiff::detail::to_bytes(csv)}});
    }
    if (!plan_out.empty()) {
      const RePaintPlan plan = repaint_plan(s.steps(), jump, resample);
      std::string p = "step,t_from,t_to,direction\n";
      for (std::size_t i = 0; i < plan.transitions.size(); ++i) {
        const auto& tr = plan.transitions[i];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%s\n", i, tr.from, tr.to,
                      tr.is_down() ? "down" : "up");
        p += buf;
      }
      voxdiff::detail::write_files_atomically({{plan_out, voxdiff::detail::to_bytes(p)}});
    }
    return kOk;
  }
};

}  // namespace
}  // namespace voxdiff::cli

int main(int argc, char** argv) {
  using namespace voxdiff::cli;
  CLI::App app{"voxdiff: volumetric diffusion inpainting"};
  app.set_config("--config", "", "TOML configuration file (flags override it)");
  app.require_subcommand(1);

  InpaintCmd inpaint;
  SynthCmd synth;
  TrainCmd train;
  PostprocessCmd post;
  EvaluateCmd evaluate;
  MaskgenCmd maskgen;
  ScheduleDumpCmd dump;
  CLI::App* sub_inpaint = inpaint.add(app);
  CLI::App* sub_synth = synth.add(app);
  CLI::App* sub_train = train.add(app);
  CLI::App* sub_post = post.add(app);
  CLI::App* sub_eval = evaluate.add(app);
  CLI::App* sub_mask = maskgen.add(app);
  CLI::App* sub_dump = dump.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfig;
  }

  try {
    if (*sub_inpaint) return inpaint.run(app);
    if (*sub_synth) return synth.run(app);
    if (*sub_train) return train.run(app);
    if (*sub_post) return post.run(app);
    if (*sub_eval) return evaluate.run(app);
    if (*sub_mask) return maskgen.run(app);
    if (*sub_dump) return dump.run(app);
  } catch (const voxdiff::Error& e) {
    std::cerr << "voxdiff: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "voxdiff: " << e.what() << "\n";
    return kNumeric;
  }
  return kConfig;
}
