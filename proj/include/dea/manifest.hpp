#pragma once

#include <string>
#include <vector>

#include "dea/config.hpp"
#include "dea/image.hpp"
#include "json.hpp"

namespace dea {

inline constexpr const char* kToolVersion = "0.1.0";

// Content hash over dimensions plus 8-bit quantized pixels.
std::string hash_image(const Image& img);

struct RunManifest {
  std::string version = kToolVersion;
  std::string command;
  RunConfig config;
  nlohmann::json seeds = nlohmann::json::object();
  std::string backend_id;
  std::string weights_hash;
  nlohmann::json inputs = nlohmann::json::object();
  // Paths relative to the directory holding the manifest.
  std::vector<std::string> outputs;
  nlohmann::json extra = nlohmann::json::object();
  double duration_seconds = 0.0;
  bool complete = false;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

}  // namespace dea
