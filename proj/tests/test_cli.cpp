#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"

using namespace voxdiff;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

CliRun run_cli(const vt::TempDir& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("VOXDIFF_THREADS=1 '") + VOXDIFF_CLI + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// 32^3 phantom, a hole in the middle and matching tissue / tumor maps.
struct Fixture {
  vt::TempDir dir{"cli"};
  fs::path image = dir / "img.nii", mask = dir / "mask.nii", tissue = dir / "tissue.nii",
           tumor = dir / "tumor.nii";

  Fixture() {
    const Shape3 s{32, 32, 32};
    const Volume3 img = vt::phantom(s);
    write_volume(img, image);
    write_mask(vt::ball(s, 16, 16, 16, 6), mask);
    Volume3 lab(s), conc(s);
    for (std::size_t n = 0; n < s.size(); ++n) {
      lab[n] = img[n] > 0.6 ? 3 : img[n] > 0 ? 2 : 0;
    }
    const MaskVolume t = vt::ball(s, 16, 16, 16, 5);
    for (std::size_t n = 0; n < s.size(); ++n) conc[n] = t[n] ? 0.9 : 0.0;
    write_volume(lab, tissue);
    write_volume(conc, tumor);
  }

  std::string fast() const { return " --T 50 --T-sample 10 --jump 2 --resample 2 "; }
};

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  vt::TempDir d("cli");
  EXPECT_EQ(run_cli(d, "--help").code, 0);
  EXPECT_EQ(run_cli(d, "").code, 3);
  EXPECT_EQ(run_cli(d, "inpaint --mode sideways").code, 3);
}

TEST(Cli, MissingMaskIsAnIoErrorNamingThePath) {
  Fixture f;
  const fs::path missing = f.dir / "nope.nii";
  const CliRun r = run_cli(f.dir, "inpaint --image " + q(f.image) + " --mask " + q(missing) +
                                   " --out " + q(f.dir / "o.nii") + f.fast());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(missing.string()), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(f.dir / "o.nii"));
}

TEST(Cli, InpaintIsDeterministicAndWritesManifest) {
  Fixture f;
  const std::string base = "inpaint --image " + q(f.image) + " --mask " + q(f.mask) + f.fast() +
                           " --prior-mean 0.5 --prior-var 0.1 --out ";
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "a.nii") + " --seed 11").code, 0);
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "b.nii") + " --seed 11").code, 0);
  EXPECT_EQ(slurp(f.dir / "a.nii"), slurp(f.dir / "b.nii"));
  const auto m = nlohmann::json::parse(slurp(f.dir / "a.nii.manifest.json"));
  EXPECT_EQ(m["command"], "inpaint");
  EXPECT_EQ(m["seed"], 11);
  EXPECT_EQ(m["inputs"]["image"]["sha256"].get<std::string>().size(), 64u);
  EXPECT_GT(m["blend"]["iterations"].get<int>(), 0);

  const Volume3 img = read_volume(f.image), out = read_volume(f.dir / "a.nii");
  const MaskVolume region = read_mask(f.mask);
  const Volume3 norm = normalize_intensity(img);
  for (std::size_t n = 0; n < img.size(); ++n) {
    if (!region[n]) { ASSERT_NEAR(out[n], norm[n], 1e-6); }
  }
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "c.nii") + " --seed 12").code, 0);
  EXPECT_NE(slurp(f.dir / "a.nii"), slurp(f.dir / "c.nii"));
}

TEST(Cli, TumorModeKeepsConcentration) {
  Fixture f;
  // Affine predictor whose only non-zero weight is on the concentration channel.
  AffineDenoiser d(4, {8, 8, 8}, 50);
  d.weight_c()[ConditioningField::kTumor] = 0.5;
  const fs::path params = f.dir / "affine.json";
  save_affine_denoiser(d, params);
  const std::string base = "inpaint --image " + q(f.image) + " --mask " + q(f.mask) + f.fast() +
                           " --denoiser affine --params " + q(params) + " --tissue " +
                           q(f.tissue) + " --no-postprocess --out ";
  const std::string tumor = " --tumor " + q(f.tumor);
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "h.nii") + tumor + " --mode healthy").code, 0);
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "t.nii") + tumor + " --mode tumor").code, 0);
  EXPECT_EQ(run_cli(f.dir, base + q(f.dir / "x.nii") + " --tumor " + q(f.dir / "z.nii")).code, 2);
  const Volume3 h = read_volume(f.dir / "h.nii"), t = read_volume(f.dir / "t.nii");
  double diff = 0;
  for (std::size_t n = 0; n < h.size(); ++n) diff += std::abs(h[n] - t[n]);
  EXPECT_GT(diff, 1.0);

  // Healthy mode equals running with no tumor map at all.
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "n.nii")).code, 0);
  EXPECT_EQ(slurp(f.dir / "h.nii"), slurp(f.dir / "n.nii"));
}

TEST(Cli, ConfigFileWithOverride) {
  Fixture f;
  {
    std::ofstream c(f.dir / "run.toml");
    c << "[inpaint]\nT = 50\nT-sample = 10\njump = 2\nresample = 2\nseed = 5\n"
         "prior-mean = 0.5\nprior-var = 0.1\n";
  }
  const std::string base = "--config " + q(f.dir / "run.toml") + " inpaint --image " +
                           q(f.image) + " --mask " + q(f.mask) + " --out ";
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "a.nii")).code, 0);
  ASSERT_EQ(run_cli(f.dir, base + q(f.dir / "b.nii") + " --seed 6").code, 0);
  ASSERT_EQ(run_cli(f.dir, "inpaint --image " + q(f.image) + " --mask " + q(f.mask) + f.fast() +
                               " --prior-mean 0.5 --prior-var 0.1 --seed 5 --out " +
                               q(f.dir / "c.nii"))
                .code,
            0);
  EXPECT_EQ(slurp(f.dir / "a.nii"), slurp(f.dir / "c.nii"));
  EXPECT_NE(slurp(f.dir / "a.nii"), slurp(f.dir / "b.nii"));

  {
    std::ofstream c(f.dir / "bad.toml");
    c << "[inpaint]\njump = 20\n";
  }
  EXPECT_EQ(run_cli(f.dir, "--config " + q(f.dir / "bad.toml") + " inpaint --image " +
                               q(f.image) + " --mask " + q(f.mask) +
                               " --T 50 --T-sample 10 --out " + q(f.dir / "d.nii"))
                .code,
            3);
  EXPECT_EQ(run_cli(f.dir, "inpaint --image " + q(f.image) + " --mask " + q(f.mask) +
                               " --eta 2 --out " + q(f.dir / "d.nii"))
                .code,
            3);
}

TEST(Cli, BatchMatchesPerSubjectSeeds) {
  Fixture f;
  nlohmann::json b{{"subjects",
                    {{{"id", "s0"}, {"image", f.image}, {"mask", f.mask}, {"out", (f.dir / "s0.nii").string()}},
                     {{"id", "s1"}, {"image", f.image}, {"mask", f.mask}, {"out", (f.dir / "s1.nii").string()}}}}};
  std::ofstream(f.dir / "batch.json") << b.dump();
  const std::string args = "inpaint --batch " + q(f.dir / "batch.json") + f.fast() +
                           " --prior-mean 0.5 --prior-var 0.1 --seed 3";
  ASSERT_EQ(run_cli(f.dir, args).code, 0);
  const std::string first = slurp(f.dir / "s0.nii");
  EXPECT_NE(first, slurp(f.dir / "s1.nii"));
  ASSERT_EQ(std::system(("VOXDIFF_THREADS=2 '" + std::string(VOXDIFF_CLI) + "' " + args).c_str()), 0);
  EXPECT_EQ(first, slurp(f.dir / "s0.nii"));
}

TEST(Cli, ScheduleDump) {
  vt::TempDir d("cli");
  ASSERT_EQ(run_cli(d, "schedule-dump --out " + q(d / "s.csv") + " --T-sample 250 --plan-out " +
                           q(d / "p.csv"))
                .code,
            0);
  std::istringstream in(slurp(d / "s.csv"));
  std::string line, first, last;
  std::getline(in, line);
  EXPECT_EQ(line, "t,original_t,beta,alpha,alpha_bar");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (rows++ == 0) first = line;
    last = line;
  }
  EXPECT_EQ(rows, 250u);
  EXPECT_EQ(first.rfind("1,4,", 0), 0u);
  EXPECT_EQ(last.rfind("250,1000,", 0), 0u);

  ASSERT_EQ(run_cli(d, "schedule-dump --out " + q(d / "full.csv")).code, 0);
  std::istringstream full(slurp(d / "full.csv"));
  std::getline(full, line);
  std::getline(full, line);
  EXPECT_NEAR(std::stod(line.substr(4, line.find(',', 4) - 4)), 1e-4, 1e-15);
  std::string prev = line;
  while (std::getline(full, line)) prev = line;
  const auto c2 = prev.find(',', prev.find(',') + 1);
  EXPECT_NEAR(std::stod(prev.substr(c2 + 1)), 0.02, 1e-15);

  const std::string plan = slurp(d / "p.csv");
  EXPECT_EQ(std::count(plan.begin(), plan.end(), '\n'), 4571);
}

TEST(Cli, EvaluateIdenticalPair) {
  Fixture f;
  ASSERT_EQ(run_cli(f.dir, "evaluate --pred " + q(f.image) + " --gt " + q(f.image) + " --mask " +
                               q(f.mask) + " --json " + q(f.dir / "r.json"))
                .code,
            0);
  const auto j = nlohmann::json::parse(slurp(f.dir / "r.json"));
  const auto& s = j["healthy"]["subjects"][0];
  EXPECT_NEAR(s["SSIM"].get<double>(), 1.0, 1e-12);
  EXPECT_EQ(s["PSNR"].get<double>(), 100.0);
  EXPECT_EQ(s["MAE"].get<double>(), 0.0);
  const CliRun r = run_cli(f.dir, "evaluate --pred " + q(f.image) + " --gt " + q(f.image) +
                                   " --mask " + q(f.mask) + " --tumor-mask " + q(f.mask));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("healthy,"), std::string::npos);
  EXPECT_NE(r.out.find("tumor,"), std::string::npos);
}

TEST(Cli, MaskgenIsSeeded) {
  Fixture f;
  const fs::path seg = f.dir / "seg.nii";
  write_mask(vt::ball({32, 32, 32}, 12, 16, 16, 3), seg);
  auto gen = [&](const std::string& tag, int seed) {
    return run_cli(f.dir, "maskgen --gt " + q(f.image) + " --tumor-seg " + q(seg) +
                              " --out-tumor " + q(f.dir / ("t" + tag + ".nii")) +
                              " --out-healthy " + q(f.dir / ("h" + tag + ".nii")) +
                              " --semi-axes 3,3,3 --seed " + std::to_string(seed))
        .code;
  };
  ASSERT_EQ(gen("a", 7), 0);
  ASSERT_EQ(gen("b", 7), 0);
  EXPECT_EQ(slurp(f.dir / "ha.nii"), slurp(f.dir / "hb.nii"));
  EXPECT_EQ(slurp(f.dir / "ta.nii"), slurp(f.dir / "tb.nii"));
}

TEST(Cli, TrainDenoiserBeatsZeroPredictor) {
  Fixture f;
  nlohmann::json pairs = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    LatentVolume z(4, {4, 4, 4}, 0.3 * i);
    const std::string name = "z" + std::to_string(i) + ".f32";
    write_latent(z, f.dir / name);
    pairs.push_back({{"latent", name}});
  }
  std::ofstream(f.dir / "train.json") << nlohmann::json{{"pairs", pairs}}.dump();
  const CliRun r = run_cli(f.dir, "train-denoiser --manifest " + q(f.dir / "train.json") +
                                   " --out " + q(f.dir / "p.json") + " --T 20 --steps 2000");
  ASSERT_EQ(r.code, 0) << r.err;
  const AffineDenoiser d = load_affine_denoiser(f.dir / "p.json");
  EXPECT_EQ(d.steps(), 20u);
}
