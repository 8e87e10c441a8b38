#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "voxdiff/voxdiff.hpp"

namespace voxdiff::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kIo = 2,
  kConfig = 3,
  kSolver = 4,
  kNumeric = 5,
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io: return kIo;
    case ErrorKind::config:
    case ErrorKind::invalid_argument: return kConfig;
    case ErrorKind::solver: return kSolver;
    case ErrorKind::numeric: return kNumeric;
  }
  return kConfig;
}

inline std::string sha256_hex(const std::vector<char>& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::numeric, "SHA-256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return os.str();
}

inline std::string sha256_of_string(const std::string& s) {
  return sha256_hex(std::vector<char>(s.begin(), s.end()));
}

/// Hash of a payload and, when present, its sidecar.
inline std::string content_hash(const fs::path& p) {
  std::vector<char> bytes = voxdiff::detail::read_file(p);
  const fs::path meta = sidecar_path(p);
  if (fs::exists(meta)) {
    const auto m = voxdiff::detail::read_file(meta);
    bytes.insert(bytes.end(), m.begin(), m.end());
  }
  return sha256_hex(bytes);
}

inline Shape3 parse_shape(const std::vector<std::size_t>& v, const char* what) {
  if (v.size() != 3) throw ConfigError(std::string(what) + " needs three values");
  return {v[0], v[1], v[2]};
}

inline fs::path default_manifest_path(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

/// Accumulates what a run read, how it was configured and what it wrote.
class RunManifest {
 public:
  RunManifest(std::string command, const CLI::App& app)
      : start_(std::chrono::steady_clock::now()) {
    const std::string cfg = app.config_to_str(true, false);
    j_["command"] = std::move(command);
    j_["config"] = cfg;
    j_["config_hash"] = sha256_of_string(cfg);
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }

  void input(const std::string& role, const fs::path& p) {
    j_["inputs"][role] = {{"path", p.string()}, {"sha256", content_hash(p)}};
  }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  json& operator[](const std::string& key) { return j_[key]; }

  void write(const fs::path& p) {
    j_["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    voxdiff::detail::write_files_atomically(
        {{p, voxdiff::detail::to_bytes(j_.dump(2) + "\n")}});
  }

 private:
  std::chrono::steady_clock::time_point start_;
  json j_;
};

inline std::size_t worker_cap() {
  if (const char* env = std::getenv("VOXDIFF_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
    throw ConfigError("VOXDIFF_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace voxdiff::cli
