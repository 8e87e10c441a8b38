#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "voxdiff/voxdiff.hpp"

namespace vt {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("voxdiff-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Uniform values on [lo, hi], rounded through float so they survive f32 I/O.
inline voxdiff::Volume3 random_volume(voxdiff::Shape3 s, std::uint64_t seed, double lo = 0.0,
                                      double hi = 1.0) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  voxdiff::Volume3 v(s);
  for (auto& x : v.data()) x = static_cast<float>(u(g));
  return v;
}

inline voxdiff::MaskVolume random_mask(voxdiff::Shape3 s, std::uint64_t seed, double p = 0.5) {
  std::mt19937_64 g(seed);
  std::bernoulli_distribution b(p);
  voxdiff::MaskVolume m(s);
  for (auto& x : m.data()) x = b(g) ? 1 : 0;
  return m;
}

inline voxdiff::LatentVolume random_latent(std::size_t channels, voxdiff::Shape3 s,
                                           std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n;
  voxdiff::LatentVolume z(channels, s);
  for (auto& x : z.data()) x = n(g);
  return z;
}

/// Ball of radius r around (cx, cy, cz), strict inequality.
inline voxdiff::MaskVolume ball(voxdiff::Shape3 s, double cx, double cy, double cz, double r) {
  voxdiff::MaskVolume m(s);
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i) {
        const double dx = i - cx, dy = j - cy, dz = k - cz;
        if (dx * dx + dy * dy + dz * dz < r * r) m(i, j, k) = 1;
      }
  return m;
}

/// Two-tissue phantom in [0, 1] with a little texture; zero background.
inline voxdiff::Volume3 phantom(voxdiff::Shape3 s) {
  voxdiff::Volume3 v(s);
  const double c = (s.nx - 1) / 2.0;
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i) {
        const double dx = i - c, dy = j - c, dz = k - c;
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (r < 0.45 * s.nx) {
          v(i, j, k) = (r < 0.25 * s.nx ? 0.8 : 0.45) + 0.05 * std::sin(0.9 * i + 0.4 * j) +
                       0.03 * std::cos(0.7 * k);
        }
      }
  return v;
}

}  // namespace vt
