#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "compass/data/tsv.hpp"
#include "compass/model/config.hpp"

namespace compass {

inline constexpr const char* kToolVersion = "0.1.0";

// Reproducibility record written next to every command's outputs.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex of the bytes
  std::vector<std::string> artifacts;
  double wall_seconds = 0.0;
  std::string tool_version = kToolVersion;
};

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string digest_file(const std::string& path) { return hex64(fnv1a64(detail::read_file(path))); }

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["config_hash"] = hex64(m.config_hash);
  j["input_digests"] = m.input_digests;
  j["artifacts"] = m.artifacts;
  j["wall_seconds"] = m.wall_seconds;
  j["tool_version"] = m.tool_version;
  return j;
}

inline void write_manifest(const std::string& path, const RunManifest& m) {
  detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace compass
