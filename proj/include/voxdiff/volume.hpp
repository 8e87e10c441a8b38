#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voxdiff/error.hpp"

namespace voxdiff {

struct Shape3 {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  constexpr std::size_t size() const noexcept { return nx * ny * nz; }

  // x-fastest linear index
  constexpr std::size_t index(std::size_t i, std::size_t j,
                              std::size_t k) const noexcept {
    return i + nx * (j + ny * k);
  }

  constexpr std::size_t operator[](std::size_t axis) const noexcept {
    return axis == 0 ? nx : axis == 1 ? ny : nz;
  }

  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;
};

inline std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s.nx) + "," + std::to_string(s.ny) + "," +
         std::to_string(s.nz) + ")";
}

struct Spacing3 {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  friend constexpr bool operator==(const Spacing3&, const Spacing3&) = default;
};

struct IntensityRange {
  double lo = 0.0;
  double hi = 1.0;

  friend constexpr bool operator==(const IntensityRange&,
                                   const IntensityRange&) = default;
};

/// Dense scalar field on a regular 3D voxel grid, stored x-fastest.
///
/// Used for images (double), binary masks (uint8) and conditioning planes.
template <typename T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;

  explicit Grid3(Shape3 shape, T fill = T{}, Spacing3 spacing = {})
      : shape_(shape), spacing_(spacing), data_(shape.size(), fill) {
    check_spacing();
  }

  Grid3(Shape3 shape, std::vector<T> data, Spacing3 spacing = {})
      : shape_(shape), spacing_(spacing), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw InvalidArgument("grid data length " + std::to_string(data_.size()) +
                            " does not match shape " + to_string(shape_));
    }
    check_spacing();
  }

  const Shape3& shape() const noexcept { return shape_; }
  const Spacing3& spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  void set_spacing(Spacing3 spacing) {
    spacing_ = spacing;
    check_spacing();
  }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t n) noexcept { return data_[n]; }
  const T& operator[](std::size_t n) const noexcept { return data_[n]; }

  T& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[shape_.index(i, j, k)];
  }
  const T& operator()(std::size_t i, std::size_t j,
                      std::size_t k) const noexcept {
    return data_[shape_.index(i, j, k)];
  }

  /// Declared intensity range; falls back to the finite data extent.
  IntensityRange intensity_range() const {
    if (range_) return *range_;
    IntensityRange r{std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()};
    for (const T& v : data_) {
      const double d = static_cast<double>(v);
      if (!std::isfinite(d)) continue;
      r.lo = std::min(r.lo, d);
      r.hi = std::max(r.hi, d);
    }
    if (r.lo > r.hi) return {0.0, 0.0};
    return r;
  }
  void set_intensity_range(IntensityRange r) { range_ = r; }
  bool has_declared_range() const noexcept { return range_.has_value(); }

  friend bool operator==(const Grid3& a, const Grid3& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_spacing() const {
    if (!(spacing_.sx > 0 && spacing_.sy > 0 && spacing_.sz > 0)) {
      throw InvalidArgument("voxel spacing must be strictly positive");
    }
  }

  Shape3 shape_{};
  Spacing3 spacing_{};
  std::vector<T> data_;
  std::optional<IntensityRange> range_;
};

using Volume3 = Grid3<double>;

/// Binary field. Inside the sampler, 1 marks known voxels.
using MaskVolume = Grid3<std::uint8_t>;

// ---------------------------------------------------------------------------
// Intensity and geometry

/// Affine rescale of the finite values onto [0, 1]. Non-finite voxels pass
/// through. A constant volume maps to zeros.
inline Volume3 normalize_intensity(const Volume3& v) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double x : v.data()) {
    if (!std::isfinite(x)) continue;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (lo > hi) throw NumericError("normalize_intensity: no finite values");

  Volume3 out(v.shape(), 0.0, v.spacing());
  auto src = v.data();
  auto dst = out.data();
  const double span = hi - lo;
  for (std::size_t n = 0; n < src.size(); ++n) {
    const double x = src[n];
    if (!std::isfinite(x)) {
      dst[n] = x;
    } else if (span > 0) {
      dst[n] = std::clamp((x - lo) / span, 0.0, 1.0);
    }
  }
  out.set_intensity_range({0.0, 1.0});
  return out;
}

/// Zero-extends each axis at its high end.
template <typename T>
Grid3<T> pad_to(const Grid3<T>& v, Shape3 target, T fill = T{}) {
  const Shape3& s = v.shape();
  if (target.nx < s.nx || target.ny < s.ny || target.nz < s.nz) {
    throw InvalidArgument("pad_to: target " + to_string(target) +
                          " smaller than source " + to_string(s));
  }
  Grid3<T> out(target, fill, v.spacing());
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i) out(i, j, k) = v(i, j, k);
  if (v.has_declared_range()) out.set_intensity_range(v.intensity_range());
  return out;
}

/// Removes voxels from the high end of each axis.
template <typename T>
Grid3<T> crop_to(const Grid3<T>& v, Shape3 target) {
  const Shape3& s = v.shape();
  if (target.nx > s.nx || target.ny > s.ny || target.nz > s.nz ||
      target.size() == 0) {
    throw InvalidArgument("crop_to: invalid target " + to_string(target) +
                          " for source " + to_string(s));
  }
  Grid3<T> out(target, T{}, v.spacing());
  for (std::size_t k = 0; k < target.nz; ++k)
    for (std::size_t j = 0; j < target.ny; ++j)
      for (std::size_t i = 0; i < target.nx; ++i) out(i, j, k) = v(i, j, k);
  if (v.has_declared_range()) out.set_intensity_range(v.intensity_range());
  return out;
}

/// Smallest shape >= s whose axes are multiples of `multiple`.
inline Shape3 round_up_shape(Shape3 s, std::size_t multiple) {
  detail::require(multiple > 0, "round_up_shape: multiple must be positive");
  auto up = [multiple](std::size_t n) {
    return (n + multiple - 1) / multiple * multiple;
  };
  return {up(s.nx), up(s.ny), up(s.nz)};
}

using Factor3 = std::array<std::size_t, 3>;

/// Corner-anchored nearest-neighbour decimation: out(i,j,k) = in(f*i, f*j, f*k).
template <typename T>
Grid3<T> nn_downsample(const Grid3<T>& v, Factor3 f) {
  const Shape3& s = v.shape();
  for (std::size_t a = 0; a < 3; ++a) {
    if (f[a] == 0 || s[a] % f[a] != 0) {
      throw InvalidArgument("nn_downsample: shape " + to_string(s) +
                            " not divisible by factor " +
                            std::to_string(f[a]) + " on axis " +
                            std::to_string(a));
    }
  }
  const Shape3 out_shape{s.nx / f[0], s.ny / f[1], s.nz / f[2]};
  const Spacing3 sp = v.spacing();
  Grid3<T> out(out_shape, T{},
               {sp.sx * static_cast<double>(f[0]),
                sp.sy * static_cast<double>(f[1]),
                sp.sz * static_cast<double>(f[2])});
  for (std::size_t k = 0; k < out_shape.nz; ++k)
    for (std::size_t j = 0; j < out_shape.ny; ++j)
      for (std::size_t i = 0; i < out_shape.nx; ++i)
        out(i, j, k) = v(f[0] * i, f[1] * j, f[2] * k);
  if (v.has_declared_range()) out.set_intensity_range(v.intensity_range());
  return out;
}

template <typename T>
Grid3<T> nn_downsample(const Grid3<T>& v, std::size_t factor) {
  return nn_downsample(v, Factor3{factor, factor, factor});
}

/// Repeats each voxel over an f^3 block; right inverse of nn_downsample on
/// block-constant volumes.
template <typename T>
Grid3<T> repeat_upsample(const Grid3<T>& v, std::size_t f) {
  detail::require(f > 0, "repeat_upsample: factor must be positive");
  const Shape3& s = v.shape();
  const Spacing3 sp = v.spacing();
  const double df = static_cast<double>(f);
  Grid3<T> out({s.nx * f, s.ny * f, s.nz * f}, T{},
               {sp.sx / df, sp.sy / df, sp.sz / df});
  const Shape3& o = out.shape();
  for (std::size_t k = 0; k < o.nz; ++k)
    for (std::size_t j = 0; j < o.ny; ++j)
      for (std::size_t i = 0; i < o.nx; ++i)
        out(i, j, k) = v(i / f, j / f, k / f);
  return out;
}

// ---------------------------------------------------------------------------
// Binary masks

inline MaskVolume invert(const MaskVolume& m) {
  MaskVolume out(m.shape(), 0, m.spacing());
  auto src = m.data();
  auto dst = out.data();
  for (std::size_t n = 0; n < src.size(); ++n) dst[n] = src[n] ? 0 : 1;
  return out;
}

inline std::size_t count_ones(const MaskVolume& m) {
  return static_cast<std::size_t>(
      std::count_if(m.data().begin(), m.data().end(),
                    [](std::uint8_t v) { return v != 0; }));
}

inline bool is_binary(const MaskVolume& m) {
  return std::all_of(m.data().begin(), m.data().end(),
                     [](std::uint8_t v) { return v <= 1; });
}

/// Voxels strictly above `threshold` become 1.
inline MaskVolume threshold_mask(const Volume3& v, double threshold) {
  MaskVolume out(v.shape(), 0, v.spacing());
  auto src = v.data();
  auto dst = out.data();
  for (std::size_t n = 0; n < src.size(); ++n) dst[n] = src[n] > threshold;
  return out;
}

inline Volume3 to_volume(const MaskVolume& m) {
  Volume3 out(m.shape(), 0.0, m.spacing());
  for (std::size_t n = 0; n < m.size(); ++n) out[n] = m[n];
  return out;
}

/// Binary dilation with the 6-connected (face-neighbour) structuring element.
inline MaskVolume dilate(const MaskVolume& m, std::size_t iterations) {
  MaskVolume cur = m;
  const Shape3 s = m.shape();
  for (std::size_t it = 0; it < iterations; ++it) {
    MaskVolume next = cur;
    for (std::size_t k = 0; k < s.nz; ++k)
      for (std::size_t j = 0; j < s.ny; ++j)
        for (std::size_t i = 0; i < s.nx; ++i) {
          if (!cur(i, j, k)) continue;
          if (i > 0) next(i - 1, j, k) = 1;
          if (i + 1 < s.nx) next(i + 1, j, k) = 1;
          if (j > 0) next(i, j - 1, k) = 1;
          if (j + 1 < s.ny) next(i, j + 1, k) = 1;
          if (k > 0) next(i, j, k - 1) = 1;
          if (k + 1 < s.nz) next(i, j, k + 1) = 1;
        }
    cur = std::move(next);
  }
  return cur;
}

/// Block reduction of a mask where an output voxel is 1 only if every voxel of
/// its f^3 footprint is 1. Maps image-resolution known masks to latent masks
/// without letting unknown content leak in.
inline MaskVolume downsample_all(const MaskVolume& m, std::size_t f) {
  const Shape3& s = m.shape();
  if (f == 0 || s.nx % f || s.ny % f || s.nz % f) {
    throw InvalidArgument("downsample_all: shape " + to_string(s) +
                          " not divisible by " + std::to_string(f));
  }
  const Shape3 o{s.nx / f, s.ny / f, s.nz / f};
  const double df = static_cast<double>(f);
  MaskVolume out(o, 1,
                 {m.spacing().sx * df, m.spacing().sy * df,
                  m.spacing().sz * df});
  for (std::size_t k = 0; k < s.nz; ++k)
    for (std::size_t j = 0; j < s.ny; ++j)
      for (std::size_t i = 0; i < s.nx; ++i)
        if (!m(i, j, k)) out(i / f, j / f, k / f) = 0;
  return out;
}

}  // namespace voxdiff
