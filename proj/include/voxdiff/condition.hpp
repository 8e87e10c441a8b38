#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>

#include "voxdiff/error.hpp"
#include "voxdiff/volume.hpp"
#include "voxdiff/volume_io.hpp"

namespace voxdiff {

enum class TissueLabel : int { background = 0, csf = 1, gm = 2, wm = 3 };

/// Conditioning stack at latent resolution, channel order fixed.
struct ConditioningField {
  static constexpr std::size_t kChannels = 4;
  static constexpr std::size_t kCsf = 0;
  static constexpr std::size_t kGm = 1;
  static constexpr std::size_t kWm = 2;
  static constexpr std::size_t kTumor = 3;
  static constexpr std::array<const char*, kChannels> kChannelNames{
      "csf", "gm", "wm", "tumor_concentration"};

  std::array<Volume3, kChannels> channels;

  const Shape3& latent_shape() const { return channels[0].shape(); }
  const Volume3& tumor() const { return channels[kTumor]; }

  friend bool operator==(const ConditioningField& a,
                         const ConditioningField& b) {
    return a.channels == b.channels;
  }
};

/// Throws if the one-hot or concentration-range invariants are violated.
inline void validate(const ConditioningField& c) {
  const Shape3 s = c.channels[0].shape();
  for (const auto& ch : c.channels) {
    if (ch.shape() != s) throw InvalidArgument("conditioning channels differ in shape");
  }
  for (std::size_t n = 0; n < s.size(); ++n) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = c.channels[k][n];
      if (v != 0.0 && v != 1.0) throw InvalidArgument("tissue channel is not one-hot");
      sum += v;
    }
    if (sum > 1.0) throw InvalidArgument("tissue channels overlap");
    const double conc = c.channels[ConditioningField::kTumor][n];
    if (!(conc >= 0.0 && conc <= 1.0)) {
      throw InvalidArgument("tumor concentration outside [0, 1]");
    }
  }
}

/// One-hot encodes tissue labels (0 background, 1 CSF, 2 GM, 3 WM), attaches
/// the tumor concentration, and downsamples every channel to latent resolution.
inline ConditioningField build_condition(const Volume3& tissue_labels,
                                         const Volume3& tumor_conc,
                                         std::size_t latent_factor) {
  if (tissue_labels.shape() != tumor_conc.shape()) {
    throw InvalidArgument("build_condition: label and concentration shapes differ");
  }
  const Shape3 s = tissue_labels.shape();
  std::array<Volume3, 3> tissue{Volume3(s, 0.0, tissue_labels.spacing()),
                                Volume3(s, 0.0, tissue_labels.spacing()),
                                Volume3(s, 0.0, tissue_labels.spacing())};
  for (std::size_t n = 0; n < s.size(); ++n) {
    const double label = tissue_labels[n];
    if (label == 0.0) continue;
    if (label != 1.0 && label != 2.0 && label != 3.0) {
      throw InvalidArgument("build_condition: unknown tissue label " +
                            std::to_string(label));
    }
    tissue[static_cast<std::size_t>(label) - 1][n] = 1.0;
  }
  for (double c : tumor_conc.data()) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw InvalidArgument("build_condition: tumor concentration " +
                            std::to_string(c) + " outside [0, 1]");
    }
  }
  ConditioningField out;
  for (std::size_t k = 0; k < 3; ++k) {
    out.channels[k] = nn_downsample(tissue[k], latent_factor);
  }
  out.channels[ConditioningField::kTumor] =
      nn_downsample(tumor_conc, latent_factor);
  return out;
}

/// Healthy-inpainting mode: same anatomy, no lesion.
inline ConditioningField zero_tumor(const ConditioningField& c) {
  ConditioningField out = c;
  auto& tumor = out.channels[ConditioningField::kTumor];
  for (double& v : tumor.data()) v = 0.0;
  return out;
}

inline void write_condition(const ConditioningField& c,
                            const std::filesystem::path& path) {
  const Shape3 s = c.latent_shape();
  Stack st{s, c.channels[0].spacing(), {}, {}};
  st.data.reserve(ConditioningField::kChannels * s.size());
  for (std::size_t k = 0; k < ConditioningField::kChannels; ++k) {
    st.channel_names.emplace_back(ConditioningField::kChannelNames[k]);
    const auto d = c.channels[k].data();
    st.data.insert(st.data.end(), d.begin(), d.end());
  }
  write_stack(st, path, {{"kind", "condition"}});
}

inline ConditioningField read_condition(const std::filesystem::path& path) {
  const Stack st = read_stack(path);
  if (st.channel_names.size() != ConditioningField::kChannels) {
    throw IoError(path.string() + ": conditioning stack must have 4 channels");
  }
  for (std::size_t k = 0; k < ConditioningField::kChannels; ++k) {
    if (st.channel_names[k] != ConditioningField::kChannelNames[k]) {
      throw IoError(path.string() + ": unexpected channel order (channel " +
                    std::to_string(k) + " is '" + st.channel_names[k] + "')");
    }
  }
  ConditioningField c;
  const std::size_t n = st.shape.size();
  for (std::size_t k = 0; k < ConditioningField::kChannels; ++k) {
    c.channels[k] = Volume3(
        st.shape,
        std::vector<double>(st.data.begin() + static_cast<std::ptrdiff_t>(k * n),
                            st.data.begin() + static_cast<std::ptrdiff_t>((k + 1) * n)),
        st.spacing);
  }
  validate(c);
  return c;
}

}  // namespace voxdiff
