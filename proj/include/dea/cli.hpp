#pragma once

#include "dea/config.hpp"
#include "dea/manifest.hpp"

namespace dea {

// Each command runs end to end, writes its artifacts under config.output_dir,
// and returns the saved manifest.
RunManifest cmd_attack(const RunConfig& config);
RunManifest cmd_eval(const RunConfig& config);
RunManifest cmd_profile_attention(const RunConfig& config);
RunManifest cmd_train_toy(const RunConfig& config);
RunManifest cmd_gen_views(const RunConfig& config);

// Argument parsing and dispatch. Returns the process exit code:
// 0 success, 2 configuration error, 3 runtime error.
int run_cli(int argc, char** argv);

}  // namespace dea
