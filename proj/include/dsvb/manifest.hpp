#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsvb/rng.hpp"
#include "dsvb/tensor.hpp"

namespace dsvb {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kManifestSchemaVersion = 1;

/// FNV-1a over the file bytes; stable content fingerprint for manifests.
inline std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot hash missing file " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return std::string(hex);
}

/// Traceability record written next to every command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> input_paths;
  std::vector<std::string> output_paths;

  nlohmann::json to_json() const {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& p : input_paths)
      inputs.push_back({{"path", p}, {"fnv1a64", file_content_hash(p)}});
    return {{"schema_version", kManifestSchemaVersion},
            {"tool_version", kToolVersion},
            {"command", command},
            {"config", config},
            {"seeds", seeds},
            {"inputs", inputs},
            {"outputs", output_paths}};
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path);
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace dsvb
