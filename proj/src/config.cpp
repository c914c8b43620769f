#include "dea/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dea/defense.hpp"
#include "dea/error.hpp"

namespace dea {
namespace {

const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json kEmpty = nlohmann::json::object();
  if (!j.is_object() || !j.contains(key)) return kEmpty;
  const nlohmann::json& s = j.at(key);
  if (!s.is_object()) raise(Errc::config_error, std::string(key) + ": expected an object");
  return s;
}

template <typename T>
T field(const nlohmann::json& j, const std::string& path, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_error, path + "." + key + ": " + e.what());
  }
}

void check_mask_policy(const std::string& policy) {
  if (policy != "auto" && policy != "alpha" && policy != "color" && policy != "file")
    raise(Errc::config_error, "input.mask_policy: unknown policy '" + policy + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (backend.kind != "toy")
    raise(Errc::config_error, "backend.kind: unknown backend '" + backend.kind + "'");
  backend.toy.validate();
  attack.validate();
  check_mask_policy(input.mask_policy);
  if (input.mask_policy == "file" && input.mask.empty())
    raise(Errc::config_error, "input.mask: required when mask_policy is 'file'");
  if (!(input.tau > 0.0)) raise(Errc::config_error, "input.tau: must be positive");
  if (train.scenes < 1) raise(Errc::config_error, "train.scenes: must be at least 1");
  if (train.epochs < 0) raise(Errc::config_error, "train.epochs: must be non-negative");
  if (!(train.lr > 0.0)) raise(Errc::config_error, "train.lr: must be positive");
  if (train.out_weights.empty()) raise(Errc::config_error, "train.out_weights: must be set");
  if (generate.steps < 1) raise(Errc::config_error, "generate.steps: must be at least 1");
  parse_defense_spec(generate.defense);
  parse_defense_spec(eval.defense);
  if (eval.workers < 0) raise(Errc::config_error, "eval.workers: must be non-negative");
  if (profile.timesteps < 1) raise(Errc::config_error, "profile.timesteps: must be at least 1");
  if (output_dir.empty()) raise(Errc::config_error, "output_dir: must be set");
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["backend"] = {{"kind", backend.kind},
                  {"weights", backend.weights},
                  {"toy", toy_config_to_json(backend.toy)}};
  j["attack"] = {{"epsilon", attack.epsilon},
                 {"step_size", attack.step_size},
                 {"alpha", attack.alpha},
                 {"max_epoch", attack.max_epoch},
                 {"seed", attack.seed},
                 {"attention_layers", layer_selection_name(attack.attention_layers)},
                 {"loss_mode", loss_mode_name(attack.loss_mode)},
                 {"denoise_steps_eval", attack.denoise_steps_eval}};
  j["input"] = {{"image", input.image},
                {"mask", input.mask},
                {"mask_policy", input.mask_policy},
                {"tau", input.tau}};
  j["train"] = {{"scenes", train.scenes},
                {"epochs", train.epochs},
                {"lr", train.lr},
                {"seed", train.seed},
                {"out_weights", train.out_weights},
                {"dataset_dir", train.dataset_dir}};
  j["generate"] = {{"steps", generate.steps},
                   {"seed", generate.seed},
                   {"defense", generate.defense}};
  j["eval"] = {{"generated_dir", eval.generated_dir},
               {"truth_dir", eval.truth_dir},
               {"defense", eval.defense},
               {"cloud_a", eval.cloud_a},
               {"cloud_b", eval.cloud_b},
               {"workers", eval.workers}};
  j["profile"] = {{"timesteps", profile.timesteps}, {"seed", profile.seed}};
  j["output_dir"] = output_dir;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) raise(Errc::config_error, "config root: expected an object");
  RunConfig c;

  const auto& jb = section(j, "backend");
  c.backend.kind = field(jb, "backend", "kind", c.backend.kind);
  c.backend.weights = field(jb, "backend", "weights", c.backend.weights);
  if (jb.contains("toy")) {
    if (!jb.at("toy").is_object()) raise(Errc::config_error, "backend.toy: expected an object");
    c.backend.toy = toy_config_from_json(jb.at("toy"));
  }

  const auto& ja = section(j, "attack");
  c.attack.epsilon = field(ja, "attack", "epsilon", c.attack.epsilon);
  c.attack.step_size = field(ja, "attack", "step_size", c.attack.step_size);
  c.attack.alpha = field(ja, "attack", "alpha", c.attack.alpha);
  c.attack.max_epoch = field(ja, "attack", "max_epoch", c.attack.max_epoch);
  c.attack.seed = field(ja, "attack", "seed", c.attack.seed);
  c.attack.attention_layers = layer_selection_from_name(
      field<std::string>(ja, "attack", "attention_layers",
                         layer_selection_name(c.attack.attention_layers)));
  c.attack.loss_mode =
      loss_mode_from_name(field<std::string>(ja, "attack", "loss_mode", loss_mode_name(c.attack.loss_mode)));
  c.attack.denoise_steps_eval = field(ja, "attack", "denoise_steps_eval", c.attack.denoise_steps_eval);

  const auto& ji = section(j, "input");
  c.input.image = field(ji, "input", "image", c.input.image);
  c.input.mask = field(ji, "input", "mask", c.input.mask);
  c.input.mask_policy = field(ji, "input", "mask_policy", c.input.mask_policy);
  c.input.tau = field(ji, "input", "tau", c.input.tau);

  const auto& jt = section(j, "train");
  c.train.scenes = field(jt, "train", "scenes", c.train.scenes);
  c.train.epochs = field(jt, "train", "epochs", c.train.epochs);
  c.train.lr = field(jt, "train", "lr", c.train.lr);
  c.train.seed = field(jt, "train", "seed", c.train.seed);
  c.train.out_weights = field(jt, "train", "out_weights", c.train.out_weights);
  c.train.dataset_dir = field(jt, "train", "dataset_dir", c.train.dataset_dir);

  const auto& jg = section(j, "generate");
  c.generate.steps = field(jg, "generate", "steps", c.generate.steps);
  c.generate.seed = field(jg, "generate", "seed", c.generate.seed);
  c.generate.defense = field(jg, "generate", "defense", c.generate.defense);

  const auto& je = section(j, "eval");
  c.eval.generated_dir = field(je, "eval", "generated_dir", c.eval.generated_dir);
  c.eval.truth_dir = field(je, "eval", "truth_dir", c.eval.truth_dir);
  c.eval.defense = field(je, "eval", "defense", c.eval.defense);
  c.eval.cloud_a = field(je, "eval", "cloud_a", c.eval.cloud_a);
  c.eval.cloud_b = field(je, "eval", "cloud_b", c.eval.cloud_b);
  c.eval.workers = field(je, "eval", "workers", c.eval.workers);

  const auto& jp = section(j, "profile");
  c.profile.timesteps = field(jp, "profile", "timesteps", c.profile.timesteps);
  c.profile.seed = field(jp, "profile", "seed", c.profile.seed);

  c.output_dir = field(j, "config", "output_dir", c.output_dir);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::config_error, "config file not readable: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_error, "config parse error in " + path + ": " + e.what());
  }
  if (j.is_object() && j.contains("command") && j.contains("config")) j = j.at("config");
  RunConfig c = from_json(j);
  apply_env_overrides(c);
  return c;
}

void apply_env_overrides(RunConfig& config) {
  if (const char* dir = std::getenv("DEA_OUTPUT_DIR"); dir != nullptr && dir[0] != '\0')
    config.output_dir = dir;
  if (const char* workers = std::getenv("DEA_WORKERS"); workers != nullptr && workers[0] != '\0') {
    char* end = nullptr;
    long n = std::strtol(workers, &end, 10);
    if (end == workers || *end != '\0' || n < 0)
      raise(Errc::config_error, "DEA_WORKERS: expected a non-negative integer, got '" +
                                    std::string(workers) + "'");
    config.eval.workers = n;
  }
}

}  // namespace dea
