#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxdiff/error.hpp"
#include "voxdiff/volume.hpp"
#include "voxdiff/volume_io.hpp"

namespace voxdiff {

/// Multi-channel latent grid, channel-major; each channel is x-fastest.
class LatentVolume {
 public:
  LatentVolume() = default;

  LatentVolume(std::size_t channels, Shape3 shape, double fill = 0.0)
      : channels_(channels), shape_(shape),
        data_(channels * shape.size(), fill) {}

  LatentVolume(std::size_t channels, Shape3 shape, std::vector<double> data)
      : channels_(channels), shape_(shape), data_(std::move(data)) {
    if (data_.size() != channels_ * shape_.size()) {
      throw InvalidArgument("latent data length does not match channels x shape");
    }
  }

  std::size_t channels() const noexcept { return channels_; }
  const Shape3& shape() const noexcept { return shape_; }
  std::size_t voxels() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * voxels(), voxels());
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * voxels(), voxels());
  }

  double& operator[](std::size_t n) noexcept { return data_[n]; }
  double operator[](std::size_t n) const noexcept { return data_[n]; }

  bool same_layout(const LatentVolume& o) const noexcept {
    return channels_ == o.channels_ && shape_ == o.shape_;
  }

  friend bool operator==(const LatentVolume&, const LatentVolume&) = default;

 private:
  std::size_t channels_ = 0;
  Shape3 shape_{};
  std::vector<double> data_;
};

inline double dot(const LatentVolume& a, const LatentVolume& b) {
  detail::require(a.same_layout(b), "dot: latent layouts differ");
  double s = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) s += a[n] * b[n];
  return s;
}

inline void write_latent(const LatentVolume& z, const std::filesystem::path& path) {
  Stack s{z.shape(), {}, {}, {z.data().begin(), z.data().end()}};
  for (std::size_t c = 0; c < z.channels(); ++c) {
    s.channel_names.push_back("z" + std::to_string(c));
  }
  write_stack(s, path, {{"kind", "latent"}});
}

inline LatentVolume read_latent(const std::filesystem::path& path) {
  Stack s = read_stack(path);
  return LatentVolume(s.channel_names.size(), s.shape, std::move(s.data));
}

}  // namespace voxdiff
