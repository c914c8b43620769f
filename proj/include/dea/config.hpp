#pragma once

#include <string>

#include "dea/attack.hpp"
#include "dea/toy.hpp"
#include "json.hpp"

namespace dea {

struct BackendConfig {
  std::string kind = "toy";
  std::string weights;  // optional path; empty = fresh seeded weights
  ToyConfig toy;
};

struct InputConfig {
  std::string image;              // optional path; empty = bundled sample scene
  std::string mask;               // optional mask image path
  std::string mask_policy = "auto";  // auto | alpha | color | file
  double tau = 0.1;
};

struct TrainConfig {
  long scenes = 64;
  long epochs = 200;
  double lr = 1e-3;
  uint64_t seed = 0;
  std::string out_weights = "toy_weights.bin";
  std::string dataset_dir;  // optional; persists renders + index when set
};

struct GenerateConfig {
  long steps = 20;
  uint64_t seed = 0;
  std::string defense = "none";  // input preprocessing before generation
};

struct EvalConfig {
  std::string generated_dir;
  std::string truth_dir;
  std::string defense = "none";  // candidate preprocessing before metrics
  std::string cloud_a;
  std::string cloud_b;
  long workers = 0;  // 0 = sequential
};

struct ProfileConfig {
  long timesteps = 10;
  uint64_t seed = 0;
};

struct RunConfig {
  BackendConfig backend;
  AttackConfig attack;
  InputConfig input;
  TrainConfig train;
  GenerateConfig generate;
  EvalConfig eval;
  ProfileConfig profile;
  std::string output_dir = "runs/out";

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  // Reads a config file; a manifest file is accepted too (its embedded
  // resolved config is used). Applies DEA_OUTPUT_DIR / DEA_WORKERS overrides.
  static RunConfig load(const std::string& path);
};

void apply_env_overrides(RunConfig& config);

}  // namespace dea
