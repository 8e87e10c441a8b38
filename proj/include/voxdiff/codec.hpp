#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>

#include "voxdiff/error.hpp"
#include "voxdiff/latent.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

/// Maps images to latent grids and back.
class LatentCodec {
 public:
  virtual ~LatentCodec() = default;

  virtual LatentVolume encode(const Volume3& x) const = 0;
  virtual Volume3 decode(const LatentVolume& z) const = 0;

  /// Spatial compression per axis.
  virtual std::size_t factor() const noexcept = 0;
  virtual std::size_t channels() const noexcept = 0;
  virtual std::string name() const = 0;
};

/// Orthonormal 4x4x4 block transform with four channels per block: the
/// normalised constant vector and the normalised centred ramps along x, y
/// and z. decode is the transpose of encode, so decode(encode(x)) is the
/// orthogonal projection onto block-wise affine volumes.
class BlockMomentCodec final : public LatentCodec {
 public:
  static constexpr std::size_t kBlock = 4;
  static constexpr std::size_t kChannels = 4;
  static constexpr std::size_t kBlockVoxels = kBlock * kBlock * kBlock;

  BlockMomentCodec() {
    const double c0 = 1.0 / std::sqrt(static_cast<double>(kBlockVoxels));
    // sum over the block of (i - 1.5)^2 = 16 * (2.25 + 0.25 + 0.25 + 2.25)
    const double ramp_norm = std::sqrt(80.0);
    for (std::size_t k = 0; k < kBlock; ++k)
      for (std::size_t j = 0; j < kBlock; ++j)
        for (std::size_t i = 0; i < kBlock; ++i) {
          const std::size_t n = i + kBlock * (j + kBlock * k);
          basis_[0][n] = c0;
          basis_[1][n] = (static_cast<double>(i) - 1.5) / ramp_norm;
          basis_[2][n] = (static_cast<double>(j) - 1.5) / ramp_norm;
          basis_[3][n] = (static_cast<double>(k) - 1.5) / ramp_norm;
        }
  }

  const std::array<double, kBlockVoxels>& basis(std::size_t c) const {
    return basis_.at(c);
  }

  LatentVolume encode(const Volume3& x) const override {
    const Shape3& s = x.shape();
    if (s.nx % kBlock || s.ny % kBlock || s.nz % kBlock || s.size() == 0) {
      throw InvalidArgument("block codec: shape " + to_string(s) +
                            " not divisible by 4 (pad first)");
    }
    const Shape3 ls{s.nx / kBlock, s.ny / kBlock, s.nz / kBlock};
    LatentVolume z(kChannels, ls);
    for (std::size_t bk = 0; bk < ls.nz; ++bk)
      for (std::size_t bj = 0; bj < ls.ny; ++bj)
        for (std::size_t bi = 0; bi < ls.nx; ++bi) {
          std::array<double, kChannels> acc{};
          for (std::size_t k = 0; k < kBlock; ++k)
            for (std::size_t j = 0; j < kBlock; ++j)
              for (std::size_t i = 0; i < kBlock; ++i) {
                const double v =
                    x(kBlock * bi + i, kBlock * bj + j, kBlock * bk + k);
                const std::size_t n = i + kBlock * (j + kBlock * k);
                for (std::size_t c = 0; c < kChannels; ++c)
                  acc[c] += basis_[c][n] * v;
              }
          const std::size_t cell = ls.index(bi, bj, bk);
          for (std::size_t c = 0; c < kChannels; ++c) z.channel(c)[cell] = acc[c];
        }
    return z;
  }

  Volume3 decode(const LatentVolume& z) const override {
    if (z.channels() != kChannels) {
      throw InvalidArgument("block codec: expected a 4-channel latent");
    }
    const Shape3& ls = z.shape();
    Volume3 x({ls.nx * kBlock, ls.ny * kBlock, ls.nz * kBlock});
    for (std::size_t bk = 0; bk < ls.nz; ++bk)
      for (std::size_t bj = 0; bj < ls.ny; ++bj)
        for (std::size_t bi = 0; bi < ls.nx; ++bi) {
          const std::size_t cell = ls.index(bi, bj, bk);
          std::array<double, kChannels> w{};
          for (std::size_t c = 0; c < kChannels; ++c) w[c] = z.channel(c)[cell];
          for (std::size_t k = 0; k < kBlock; ++k)
            for (std::size_t j = 0; j < kBlock; ++j)
              for (std::size_t i = 0; i < kBlock; ++i) {
                const std::size_t n = i + kBlock * (j + kBlock * k);
                double v = 0.0;
                for (std::size_t c = 0; c < kChannels; ++c) v += w[c] * basis_[c][n];
                x(kBlock * bi + i, kBlock * bj + j, kBlock * bk + k) = v;
              }
        }
    return x;
  }

  std::size_t factor() const noexcept override { return kBlock; }
  std::size_t channels() const noexcept override { return kChannels; }
  std::string name() const override { return "block"; }

 private:
  std::array<std::array<double, kBlockVoxels>, kChannels> basis_{};
};

/// One-channel latent with the image's own grid; lossless.
class IdentityCodec final : public LatentCodec {
 public:
  LatentVolume encode(const Volume3& x) const override {
    return LatentVolume(1, x.shape(), x.values());
  }

  Volume3 decode(const LatentVolume& z) const override {
    if (z.channels() != 1) {
      throw InvalidArgument("identity codec: expected a 1-channel latent");
    }
    return Volume3(z.shape(),
                   std::vector<double>(z.data().begin(), z.data().end()));
  }

  std::size_t factor() const noexcept override { return 1; }
  std::size_t channels() const noexcept override { return 1; }
  std::string name() const override { return "identity"; }
};

inline std::unique_ptr<LatentCodec> block_moment_codec() {
  return std::make_unique<BlockMomentCodec>();
}

inline std::unique_ptr<LatentCodec> identity_codec() {
  return std::make_unique<IdentityCodec>();
}

inline std::unique_ptr<LatentCodec> make_codec(const std::string& name) {
  if (name == "block") return block_moment_codec();
  if (name == "identity") return identity_codec();
  throw ConfigError("unknown codec '" + name + "' (expected block|identity)");
}

}  // namespace voxdiff
