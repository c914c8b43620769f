#include "dea/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dea/error.hpp"
#include "dea/hash.hpp"

namespace dea {

std::string hash_image(const Image& img) {
  Fnv1a64 h;
  uint32_t dims[3] = {static_cast<uint32_t>(img.height()), static_cast<uint32_t>(img.width()),
                      static_cast<uint32_t>(img.channels())};
  h.update(dims, sizeof(dims));
  for (const auto& plane : img.planes)
    for (long r = 0; r < plane.rows(); ++r)
      for (long c = 0; c < plane.cols(); ++c) {
        double v = std::clamp(plane(r, c), 0.0, 1.0);
        auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
        h.update(&byte, 1);
      }
  return "fnv1a64:" + hash_hex(h.digest());
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["command"] = command;
  j["config"] = config.to_json();
  j["seeds"] = seeds;
  j["backend_id"] = backend_id;
  j["weights_hash"] = weights_hash;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["extra"] = extra;
  j["duration_seconds"] = duration_seconds;
  j["complete"] = complete;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  if (!j.is_object()) raise(Errc::config_error, "manifest root: expected an object");
  RunManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.config = RunConfig::from_json(j.at("config"));
    m.seeds = j.at("seeds");
    m.backend_id = j.at("backend_id").get<std::string>();
    m.weights_hash = j.at("weights_hash").get<std::string>();
    m.inputs = j.at("inputs");
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.extra = j.at("extra");
    m.duration_seconds = j.at("duration_seconds").get<double>();
    m.complete = j.at("complete").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::config_error, std::string("manifest: ") + e.what());
  }
  return m;
}

void RunManifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write manifest: " + path);
  out << to_json().dump(2) << "\n";
  if (!out) raise(Errc::io_error, "failed writing manifest: " + path);
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(Errc::io_error, "cannot read manifest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::io_error, "manifest parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace dea
