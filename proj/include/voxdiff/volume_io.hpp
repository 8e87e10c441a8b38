#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <json.hpp>

#include "voxdiff/error.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

enum class VolumeFormat {
  nifti1_raw,  // single-file .nii, float32, uncompressed
  f32_raw,     // little-endian float32 payload + <path>.meta.json sidecar
};

/// `.nii` selects NIfTI-1; everything else is treated as f32-raw.
inline VolumeFormat format_for_path(const std::filesystem::path& p) {
  return p.extension() == ".nii" ? VolumeFormat::nifti1_raw
                                 : VolumeFormat::f32_raw;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".meta.json");
}

namespace detail {

// Little-endian scalar codecs, independent of host byte order.
template <typename T>
void put_le(std::vector<char>& buf, std::size_t offset, T value) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4,
                                                  std::uint32_t, std::uint64_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    buf[offset + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
}

template <typename T>
T get_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 2, std::uint16_t,
                               std::conditional_t<sizeof(T) == 4,
                                                  std::uint32_t, std::uint64_t>>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bits |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  }
  return std::bit_cast<T>(bits);
}

inline std::vector<char> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + p.string());
  return bytes;
}

inline std::filesystem::path temp_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".tmp");
}

inline void write_file(const std::filesystem::path& p,
                       const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write failed: " + p.string());
}

inline void rename_into_place(const std::filesystem::path& from,
                              const std::filesystem::path& to) {
  std::error_code ec;
  std::filesystem::rename(from, to, ec);
  if (ec) throw IoError("cannot rename " + from.string() + " -> " +
                        to.string() + ": " + ec.message());
}

/// Writes several files so that each destination either keeps its old
/// content or receives the complete new content.
inline void write_files_atomically(
    const std::vector<std::pair<std::filesystem::path, std::vector<char>>>&
        files) {
  for (const auto& [p, bytes] : files) write_file(temp_path(p), bytes);
  for (const auto& [p, bytes] : files) rename_into_place(temp_path(p), p);
}

inline std::vector<char> to_bytes(const std::string& s) {
  return {s.begin(), s.end()};
}

inline void encode_f32(std::span<const double> values, std::vector<char>& buf,
                       std::size_t offset) {
  for (std::size_t n = 0; n < values.size(); ++n) {
    put_le<float>(buf, offset + 4 * n, static_cast<float>(values[n]));
  }
}

inline void decode_f32(const char* src, std::span<double> values) {
  for (std::size_t n = 0; n < values.size(); ++n) {
    values[n] = static_cast<double>(get_le<float>(src + 4 * n));
  }
}

inline nlohmann::json shape_json(const Shape3& s) {
  return nlohmann::json::array({s.nx, s.ny, s.nz});
}

inline nlohmann::json spacing_json(const Spacing3& s) {
  return nlohmann::json::array({s.sx, s.sy, s.sz});
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  const auto bytes = read_file(p);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

struct StackedMeta {
  Shape3 shape;
  Spacing3 spacing;
  std::vector<std::string> channels;
  nlohmann::json extra;
};

inline StackedMeta parse_stacked_meta(const std::filesystem::path& meta_path) {
  const auto j = read_json_file(meta_path);
  StackedMeta m;
  try {
    const auto& sh = j.at("shape");
    if (!sh.is_array() || sh.size() != 3) throw IoError("shape must have 3 entries");
    m.shape = {sh[0].get<std::size_t>(), sh[1].get<std::size_t>(),
               sh[2].get<std::size_t>()};
    if (j.contains("spacing")) {
      const auto& sp = j.at("spacing");
      if (!sp.is_array() || sp.size() != 3) throw IoError("spacing must have 3 entries");
      m.spacing = {sp[0].get<double>(), sp[1].get<double>(), sp[2].get<double>()};
    }
    if (j.contains("channels")) {
      m.channels = j.at("channels").get<std::vector<std::string>>();
    }
    m.extra = j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed sidecar " + meta_path.string() + ": " + e.what());
  }
  if (m.shape.size() == 0) throw IoError("sidecar " + meta_path.string() + " has an empty shape");
  if (!(m.spacing.sx > 0 && m.spacing.sy > 0 && m.spacing.sz > 0)) {
    throw IoError("sidecar " + meta_path.string() + " has non-positive spacing");
  }
  return m;
}

// --- NIfTI-1 -----------------------------------------------------------------

inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr std::size_t kNiftiVoxOffset = 352;
inline constexpr std::int16_t kNiftiFloat32 = 16;

inline Volume3 read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < kNiftiHeaderSize) {
    throw IoError(path.string() + ": file shorter than a NIfTI-1 header");
  }
  const char* h = bytes.data();
  if (get_le<std::int32_t>(h) != 348) {
    throw IoError(path.string() +
                  ": sizeof_hdr is not 348 little-endian (not NIfTI-1 or "
                  "big-endian)");
  }
  if (std::memcmp(h + 344, "n+1\0", 4) != 0) {
    throw IoError(path.string() + ": magic is not \"n+1\" (single-file NIfTI-1)");
  }
  const auto dim0 = get_le<std::int16_t>(h + 40);
  std::array<std::int16_t, 8> dim{};
  for (int d = 0; d < 8; ++d) dim[d] = get_le<std::int16_t>(h + 40 + 2 * d);
  if (dim0 < 1 || dim0 > 7) throw IoError(path.string() + ": invalid dim[0]");
  for (int d = 4; d <= dim0; ++d) {
    if (dim[d] != 1) {
      throw IoError(path.string() + ": only 3D volumes are supported");
    }
  }
  Shape3 shape{1, 1, 1};
  for (int d = 1; d <= std::min<int>(dim0, 3); ++d) {
    if (dim[d] < 1) throw IoError(path.string() + ": non-positive dimension");
    (d == 1 ? shape.nx : d == 2 ? shape.ny : shape.nz) =
        static_cast<std::size_t>(dim[d]);
  }
  const auto datatype = get_le<std::int16_t>(h + 70);
  const auto bitpix = get_le<std::int16_t>(h + 72);
  if (datatype != kNiftiFloat32 || bitpix != 32) {
    throw IoError(path.string() + ": unsupported datatype " +
                  std::to_string(datatype) + " (only float32 is accepted)");
  }
  Spacing3 spacing{get_le<float>(h + 80), get_le<float>(h + 84),
                   get_le<float>(h + 88)};
  if (dim0 < 3) spacing.sz = 1.0;
  if (dim0 < 2) spacing.sy = 1.0;
  if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) {
    throw IoError(path.string() + ": non-positive pixdim");
  }
  const float vox_offset = get_le<float>(h + 108);
  if (!(vox_offset >= static_cast<float>(kNiftiVoxOffset)) ||
      vox_offset != std::floor(vox_offset)) {
    throw IoError(path.string() + ": vox_offset must be an integer >= 352");
  }
  const float slope = get_le<float>(h + 112);
  const float inter = get_le<float>(h + 116);
  if (!((slope == 0.0f || slope == 1.0f) && inter == 0.0f)) {
    throw IoError(path.string() + ": intensity scaling (scl_slope/scl_inter) is not supported");
  }
  const auto offset = static_cast<std::size_t>(vox_offset);
  const std::size_t payload = 4 * shape.size();
  if (bytes.size() != offset + payload) {
    throw IoError(path.string() + ": payload size " +
                  std::to_string(bytes.size() >= offset ? bytes.size() - offset : 0) +
                  " does not match header shape " + to_string(shape) +
                  " (expected " + std::to_string(payload) + " bytes)");
  }
  Volume3 v(shape, 0.0, spacing);
  decode_f32(h + offset, v.data());
  const float cal_max = get_le<float>(h + 124);
  const float cal_min = get_le<float>(h + 128);
  if (cal_max > cal_min) v.set_intensity_range({cal_min, cal_max});
  return v;
}

inline std::vector<char> encode_nifti(const Volume3& v) {
  const Shape3& s = v.shape();
  constexpr std::size_t kMaxDim = 32767;
  if (s.nx > kMaxDim || s.ny > kMaxDim || s.nz > kMaxDim) {
    throw InvalidArgument("volume too large for NIfTI-1 dimensions");
  }
  std::vector<char> buf(kNiftiVoxOffset + 4 * s.size(), 0);
  put_le<std::int32_t>(buf, 0, 348);
  buf[38] = 'r';
  const std::array<std::int16_t, 8> dim{3,
                                        static_cast<std::int16_t>(s.nx),
                                        static_cast<std::int16_t>(s.ny),
                                        static_cast<std::int16_t>(s.nz),
                                        1, 1, 1, 1};
  for (int d = 0; d < 8; ++d) put_le<std::int16_t>(buf, 40 + 2 * d, dim[d]);
  put_le<std::int16_t>(buf, 70, kNiftiFloat32);
  put_le<std::int16_t>(buf, 72, 32);
  const std::array<float, 8> pixdim{1.0f,
                                    static_cast<float>(v.spacing().sx),
                                    static_cast<float>(v.spacing().sy),
                                    static_cast<float>(v.spacing().sz),
                                    1.0f, 1.0f, 1.0f, 1.0f};
  for (int d = 0; d < 8; ++d) put_le<float>(buf, 76 + 4 * d, pixdim[d]);
  put_le<float>(buf, 108, static_cast<float>(kNiftiVoxOffset));
  put_le<float>(buf, 112, 1.0f);
  if (v.has_declared_range()) {
    put_le<float>(buf, 124, static_cast<float>(v.intensity_range().hi));
    put_le<float>(buf, 128, static_cast<float>(v.intensity_range().lo));
  }
  buf[123] = 2;  // xyzt_units: millimetres
  std::memcpy(buf.data() + 148, "voxdiff", 7);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  encode_f32(v.data(), buf, kNiftiVoxOffset);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline Volume3 read_volume(const std::filesystem::path& path,
                           VolumeFormat format) {
  if (!std::filesystem::exists(path)) {
    throw IoError("no such file: " + path.string());
  }
  if (format == VolumeFormat::nifti1_raw) return detail::read_nifti(path);

  const auto meta = detail::parse_stacked_meta(sidecar_path(path));
  if (meta.channels.size() > 1) {
    throw IoError(path.string() + " holds " +
                  std::to_string(meta.channels.size()) +
                  " channels; expected a single volume");
  }
  const auto bytes = detail::read_file(path);
  if (bytes.size() != 4 * meta.shape.size()) {
    throw IoError(path.string() + ": payload size " +
                  std::to_string(bytes.size()) + " does not match shape " +
                  to_string(meta.shape));
  }
  Volume3 v(meta.shape, 0.0, meta.spacing);
  detail::decode_f32(bytes.data(), v.data());
  if (meta.extra.contains("intensity_range")) {
    const auto& r = meta.extra["intensity_range"];
    v.set_intensity_range({r.at(0).get<double>(), r.at(1).get<double>()});
  }
  return v;
}

inline Volume3 read_volume(const std::filesystem::path& path) {
  return read_volume(path, format_for_path(path));
}

inline void write_volume(const Volume3& v, const std::filesystem::path& path,
                         VolumeFormat format) {
  if (format == VolumeFormat::nifti1_raw) {
    detail::write_files_atomically({{path, detail::encode_nifti(v)}});
    return;
  }
  std::vector<char> payload(4 * v.size());
  detail::encode_f32(v.data(), payload, 0);
  nlohmann::json meta{{"shape", detail::shape_json(v.shape())},
                      {"spacing", detail::spacing_json(v.spacing())}};
  if (v.has_declared_range()) {
    meta["intensity_range"] = {v.intensity_range().lo, v.intensity_range().hi};
  }
  detail::write_files_atomically(
      {{sidecar_path(path), detail::to_bytes(meta.dump(2) + "\n")},
       {path, std::move(payload)}});
}

inline void write_volume(const Volume3& v, const std::filesystem::path& path) {
  write_volume(v, path, format_for_path(path));
}

/// Masks are stored as float volumes holding 0/1; reading thresholds at 0.5.
inline MaskVolume read_mask(const std::filesystem::path& path) {
  const Volume3 v = read_volume(path);
  for (double x : v.data()) {
    if (x != 0.0 && x != 1.0) {
      throw IoError(path.string() + ": mask contains non-binary value " +
                    std::to_string(x));
    }
  }
  return threshold_mask(v, 0.5);
}

inline void write_mask(const MaskVolume& m, const std::filesystem::path& path) {
  write_volume(to_volume(m), path);
}

// ---------------------------------------------------------------------------
// Multi-channel stacks: channel-major float32 payload + manifest naming the
// channels. Shared by conditioning fields and latents.

struct Stack {
  Shape3 shape;
  Spacing3 spacing;
  std::vector<std::string> channel_names;
  std::vector<double> data;  // channel-major, each channel x-fastest
};

inline void write_stack(const Stack& s, const std::filesystem::path& path,
                        const nlohmann::json& extra = nlohmann::json::object()) {
  if (s.data.size() != s.channel_names.size() * s.shape.size()) {
    throw InvalidArgument("write_stack: data length does not match channels x shape");
  }
  std::vector<char> payload(4 * s.data.size());
  detail::encode_f32(s.data, payload, 0);
  nlohmann::json meta = extra;
  meta["shape"] = detail::shape_json(s.shape);
  meta["spacing"] = detail::spacing_json(s.spacing);
  meta["channels"] = s.channel_names;
  detail::write_files_atomically(
      {{sidecar_path(path), detail::to_bytes(meta.dump(2) + "\n")},
       {path, std::move(payload)}});
}

inline Stack read_stack(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("no such file: " + path.string());
  }
  auto meta = detail::parse_stacked_meta(sidecar_path(path));
  if (meta.channels.empty()) {
    throw IoError(sidecar_path(path).string() + ": missing channel list");
  }
  const auto bytes = detail::read_file(path);
  const std::size_t n = meta.channels.size() * meta.shape.size();
  if (bytes.size() != 4 * n) {
    throw IoError(path.string() + ": payload size " +
                  std::to_string(bytes.size()) + " does not match " +
                  std::to_string(meta.channels.size()) + " channels of " +
                  to_string(meta.shape));
  }
  Stack s{meta.shape, meta.spacing, std::move(meta.channels),
          std::vector<double>(n)};
  detail::decode_f32(bytes.data(), s.data);
  return s;
}

}  // namespace voxdiff
