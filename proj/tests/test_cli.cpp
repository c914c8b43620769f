#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dea/cli.hpp"
#include "dea/error.hpp"
#include "dea/image.hpp"
#include "dea/trace.hpp"

namespace fs = std::filesystem;

namespace {

void clear_env() {
  unsetenv("DEA_OUTPUT_DIR");
  unsetenv("DEA_WORKERS");
}

std::string fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "dea_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

dea::RunConfig small_run(const std::string& out_dir) {
  dea::RunConfig config;
  config.backend.toy.image_side = 16;
  config.backend.toy.latent_side = 4;
  config.backend.toy.channels = 8;
  config.backend.toy.heads = 2;
  config.backend.toy.n_views = 2;
  config.backend.toy.n_domains = 2;
  config.backend.toy.t_max = 20;
  config.attack.epsilon = 8.0;
  config.attack.step_size = 2.0;
  config.attack.max_epoch = 2;
  config.attack.seed = 3;
  config.generate.steps = 2;
  config.profile.timesteps = 2;
  config.output_dir = out_dir;
  return config;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Every file under the run directory must be listed in the manifest, and every
// listed output must exist.
void check_manifest_covers_dir(const dea::RunManifest& m, const std::string& dir) {
  std::set<std::string> listed(m.outputs.begin(), m.outputs.end());
  listed.insert("manifest.json");
  std::set<std::string> present;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      present.insert(fs::relative(entry.path(), dir).generic_string());
  CHECK(present == listed);
}

int call_cli(std::vector<std::string> args) {
  std::vector<std::string> full;
  full.emplace_back("dea");
  for (auto& a : args) full.push_back(std::move(a));
  std::vector<char*> argv;
  argv.reserve(full.size());
  for (auto& s : full) argv.push_back(s.data());
  return dea::run_cli(int(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("config json round trip is exact") {
  clear_env();
  dea::RunConfig config;
  nlohmann::json j1 = config.to_json();
  nlohmann::json j2 = dea::RunConfig::from_json(j1).to_json();
  CHECK(j1.dump() == j2.dump());

  config.backend.kind = "toy";
  config.backend.weights = "w.bin";
  config.backend.toy.n_views = 3;
  config.attack.epsilon = 12.0;
  config.attack.loss_mode = dea::LossMode::feature_only;
  config.attack.attention_layers = dea::AttentionLayerSelection::lowest;
  config.input.mask_policy = "color";
  config.input.tau = 0.25;
  config.eval.workers = 4;
  config.generate.defense = "smooth:kernel=5";
  config.output_dir = "elsewhere";
  nlohmann::json j3 = config.to_json();
  nlohmann::json j4 = dea::RunConfig::from_json(j3).to_json();
  CHECK(j3.dump() == j4.dump());
}

TEST_CASE("config defaults materialize from an empty object") {
  dea::RunConfig from_empty = dea::RunConfig::from_json(nlohmann::json::object());
  CHECK(from_empty.to_json().dump() == dea::RunConfig{}.to_json().dump());
  CHECK(from_empty.attack.epsilon == 16.0);
  CHECK(from_empty.backend.toy.t_max == 100);
  CHECK(from_empty.output_dir == "runs/out");
}

TEST_CASE("config errors name the offending field") {
  nlohmann::json bad = dea::RunConfig{}.to_json();
  bad["attack"]["epsilon"] = "very";
  try {
    dea::RunConfig::from_json(bad);
    CHECK(false);
  } catch (const dea::Error& e) {
    CHECK(e.code() == dea::Errc::config_error);
    CHECK(std::string(e.what()).find("attack.epsilon") != std::string::npos);
  }

  auto expect_message = [](dea::RunConfig config, const char* needle) {
    try {
      config.validate();
      CHECK(false);
    } catch (const dea::Error& e) {
      CHECK(e.code() == dea::Errc::config_error);
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  dea::RunConfig config;
  config.backend.kind = "onnx";
  expect_message(config, "backend.kind");
  config = dea::RunConfig{};
  config.input.mask_policy = "file";
  expect_message(config, "input.mask");
  config = dea::RunConfig{};
  config.input.tau = 0.0;
  expect_message(config, "input.tau");
  config = dea::RunConfig{};
  config.eval.defense = "blur:sigma=2";
  CHECK_THROWS_AS(config.validate(), dea::Error);
  config = dea::RunConfig{};
  config.output_dir.clear();
  expect_message(config, "output_dir");
}

TEST_CASE("environment overrides") {
  clear_env();
  setenv("DEA_OUTPUT_DIR", "/tmp/dea_env_dir", 1);
  setenv("DEA_WORKERS", "5", 1);
  dea::RunConfig config;
  dea::apply_env_overrides(config);
  CHECK(config.output_dir == "/tmp/dea_env_dir");
  CHECK(config.eval.workers == 5);

  setenv("DEA_WORKERS", "many", 1);
  dea::RunConfig other;
  CHECK_THROWS_AS(dea::apply_env_overrides(other), dea::Error);
  clear_env();
}

TEST_CASE("config load reads plain files and manifests") {
  clear_env();
  std::string dir = fresh_dir("load");
  dea::RunConfig config = small_run(dir);
  config.eval.workers = 3;

  fs::path cfg_path = fs::path(dir) / "config.json";
  std::ofstream(cfg_path) << config.to_json().dump(2);
  dea::RunConfig loaded = dea::RunConfig::load(cfg_path.string());
  CHECK(loaded.to_json().dump() == config.to_json().dump());

  dea::RunManifest m;
  m.command = "attack";
  m.config = config;
  fs::path man_path = fs::path(dir) / "manifest.json";
  m.save(man_path.string());
  dea::RunConfig from_manifest = dea::RunConfig::load(man_path.string());
  CHECK(from_manifest.to_json().dump() == config.to_json().dump());

  CHECK_THROWS_AS(dea::RunConfig::load((fs::path(dir) / "missing.json").string()), dea::Error);
  fs::path garbled = fs::path(dir) / "garbled.json";
  std::ofstream(garbled) << "{not json";
  CHECK_THROWS_AS(dea::RunConfig::load(garbled.string()), dea::Error);
}

TEST_CASE("manifest json round trip") {
  dea::RunManifest m;
  m.command = "attack";
  m.config = small_run("somewhere");
  m.seeds = {{"attack", 7}};
  m.backend_id = "toy-mvdm";
  m.weights_hash = "fnv1a64:deadbeef";
  m.inputs = {{"image", "x.png"}};
  m.outputs = {"adversarial.png", "attack_trace.txt"};
  m.extra = {{"note", 1.5}};
  m.duration_seconds = 2.25;
  m.complete = true;
  dea::RunManifest back = dea::RunManifest::from_json(m.to_json());
  CHECK(back.to_json().dump() == m.to_json().dump());

  CHECK_THROWS_AS(dea::RunManifest::from_json(nlohmann::json::array()), dea::Error);
}

TEST_CASE("trace text round trip is bit exact") {
  std::vector<dea::TraceRow> rows(2);
  rows[0] = {0, 17, -1.0 / 3.0, 0.1234567890123456789, -0.25, 0.5, 0.125, 0.0627};
  rows[1] = {1, 3, -2.5e-17, 1e-12, 3.0, 0.215, 0.0123, 0.0627450980392156862};
  nlohmann::json echo = {{"alpha", 1.0}, {"seed", 7}};
  std::string text = dea::trace_to_text(rows, echo, "fnv1a64:0123");
  dea::ParsedTrace parsed = dea::parse_trace_text(text);
  CHECK(parsed.image_hash == "fnv1a64:0123");
  CHECK(parsed.config.dump() == echo.dump());
  REQUIRE(parsed.rows.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(parsed.rows[i].epoch == rows[i].epoch);
    CHECK(parsed.rows[i].t == rows[i].t);
    CHECK(parsed.rows[i].l_fe == rows[i].l_fe);
    CHECK(parsed.rows[i].l_ae == rows[i].l_ae);
    CHECK(parsed.rows[i].l_de == rows[i].l_de);
    CHECK(parsed.rows[i].t_f_mean == rows[i].t_f_mean);
    CHECK(parsed.rows[i].t_b_mean == rows[i].t_b_mean);
    CHECK(parsed.rows[i].linf_delta == rows[i].linf_delta);
  }

  CHECK_THROWS_AS(dea::parse_trace_text("bogus header\n"), dea::Error);
  std::string corrupted = text;
  corrupted.replace(corrupted.find("l_fe="), 5, "l_xx=");
  CHECK_THROWS_AS(dea::parse_trace_text(corrupted), dea::Error);
}

TEST_CASE("attack command end to end") {
  clear_env();
  std::string dir = fresh_dir("attack");
  dea::RunManifest m = dea::cmd_attack(small_run(dir));

  CHECK(m.command == "attack");
  CHECK(m.complete);
  CHECK(m.version == dea::kToolVersion);
  CHECK_FALSE(m.backend_id.empty());
  CHECK_FALSE(m.weights_hash.empty());
  CHECK(m.seeds.at("attack") == 3);
  CHECK(m.inputs.at("mask_foreground").get<long>() > 0);
  CHECK(m.extra.contains("initial"));
  CHECK(m.extra.contains("final"));
  check_manifest_covers_dir(m, dir);

  dea::ParsedTrace parsed = dea::read_trace((fs::path(dir) / "attack_trace.txt").string());
  CHECK(parsed.rows.size() == 2);
  CHECK(parsed.image_hash == m.inputs.at("image_hash").get<std::string>());
  CHECK_FALSE(parsed.config.is_null());

  dea::RunManifest reloaded = dea::RunManifest::load((fs::path(dir) / "manifest.json").string());
  CHECK(reloaded.to_json().dump() == m.to_json().dump());
}

TEST_CASE("attack rerun from a manifest reproduces artifacts bit for bit") {
  clear_env();
  std::string dir1 = fresh_dir("attack_a");
  std::string dir2 = fresh_dir("attack_b");
  dea::cmd_attack(small_run(dir1));

  dea::RunConfig replay = dea::RunConfig::load((fs::path(dir1) / "manifest.json").string());
  replay.output_dir = dir2;
  dea::cmd_attack(replay);

  CHECK(slurp(fs::path(dir1) / "adversarial.png") == slurp(fs::path(dir2) / "adversarial.png"));
  CHECK(slurp(fs::path(dir1) / "mask.png") == slurp(fs::path(dir2) / "mask.png"));
  dea::ParsedTrace t1 = dea::read_trace((fs::path(dir1) / "attack_trace.txt").string());
  dea::ParsedTrace t2 = dea::read_trace((fs::path(dir2) / "attack_trace.txt").string());
  REQUIRE(t1.rows.size() == t2.rows.size());
  for (size_t i = 0; i < t1.rows.size(); ++i) {
    CHECK(t1.rows[i].l_de == t2.rows[i].l_de);
    CHECK(t1.rows[i].linf_delta == t2.rows[i].linf_delta);
  }
}

TEST_CASE("gen-views then eval on identical directories") {
  clear_env();
  std::string gen_dir = fresh_dir("gen");
  dea::RunConfig config = small_run(gen_dir);
  config.generate.seed = 5;
  dea::RunManifest gm = dea::cmd_gen_views(config);
  CHECK(gm.command == "gen-views");
  CHECK(gm.outputs.size() == 4);
  CHECK(gm.extra.at("slots") == 4);
  check_manifest_covers_dir(gm, gen_dir);

  std::string eval_dir = fresh_dir("eval");
  dea::RunConfig econfig = small_run(eval_dir);
  std::string views = (fs::path(gen_dir) / "views").string();
  econfig.eval.generated_dir = views;
  econfig.eval.truth_dir = views;
  econfig.eval.workers = 2;
  dea::RunManifest em = dea::cmd_eval(econfig);
  CHECK(em.extra.at("ssim_mean").get<double>() == 1.0);
  CHECK(em.extra.at("perceptual_mean").get<double>() == 0.0);
  CHECK(em.extra.at("defense") == "none");
  CHECK(em.inputs.at("pairs") == 4);
  check_manifest_covers_dir(em, eval_dir);
  std::string report = slurp(fs::path(eval_dir) / "metrics_report.txt");
  CHECK(report.find("view=1 domain=1") != std::string::npos);

  // stored views are 8-bit, so an 8-bit squeeze of the candidates is a no-op
  econfig.output_dir = fresh_dir("eval_squeezed");
  econfig.eval.defense = "squeeze:bits=8";
  dea::RunManifest em8 = dea::cmd_eval(econfig);
  CHECK(em8.extra.at("ssim_mean").get<double>() == 1.0);
  CHECK(em8.extra.at("defense") == "squeeze:bits=8");
}

TEST_CASE("eval validates inputs and computes chamfer") {
  clear_env();
  std::string dir = fresh_dir("eval_bad");
  dea::RunConfig config = small_run(dir);
  CHECK_THROWS_AS(dea::cmd_eval(config), dea::Error);

  config.eval.generated_dir = (fs::path(dir) / "nope").string();
  config.eval.truth_dir = (fs::path(dir) / "nope").string();
  try {
    dea::cmd_eval(config);
    CHECK(false);
  } catch (const dea::Error& e) {
    CHECK(e.code() == dea::Errc::missing_artifact);
  }

  std::string gen_dir = fresh_dir("eval_cloud_gen");
  dea::RunConfig gconfig = small_run(gen_dir);
  dea::cmd_gen_views(gconfig);
  std::string views = (fs::path(gen_dir) / "views").string();

  fs::path cloud_a = fs::path(dir) / "a.xyz";
  fs::path cloud_b = fs::path(dir) / "b.xyz";
  std::ofstream(cloud_a) << "0 0 0\n";
  std::ofstream(cloud_b) << "1 0 0\n";
  dea::RunConfig cconfig = small_run(fresh_dir("eval_cloud"));
  cconfig.eval.generated_dir = views;
  cconfig.eval.truth_dir = views;
  cconfig.eval.cloud_a = cloud_a.string();
  CHECK_THROWS_AS(dea::cmd_eval(cconfig), dea::Error);
  cconfig.eval.cloud_b = cloud_b.string();
  dea::RunManifest m = dea::cmd_eval(cconfig);
  CHECK(m.extra.at("chamfer").get<double>() == doctest::Approx(2.0));
}

TEST_CASE("train command end to end") {
  clear_env();
  std::string dir = fresh_dir("train");
  dea::RunConfig config = small_run(dir);
  config.train.scenes = 2;
  config.train.epochs = 2;
  config.train.seed = 11;
  config.train.out_weights = "w.bin";
  config.train.dataset_dir = "dataset";
  dea::RunManifest m = dea::cmd_train_toy(config);
  CHECK(m.command == "train-toy");
  CHECK(m.complete);
  CHECK(fs::exists(fs::path(dir) / "w.bin"));
  CHECK(m.extra.contains("initial_loss"));
  CHECK(m.extra.contains("final_loss"));
  check_manifest_covers_dir(m, dir);

  std::string curve = slurp(fs::path(dir) / "loss_curve.txt");
  CHECK(curve.rfind("# dea-train-curve v1\n", 0) == 0);
  CHECK(curve.find("epoch=1 loss=") != std::string::npos);

  // the saved weights feed straight back into another command
  dea::RunConfig pconfig = small_run(fresh_dir("profile_trained"));
  pconfig.backend.weights = (fs::path(dir) / "w.bin").string();
  dea::RunManifest pm = dea::cmd_profile_attention(pconfig);
  CHECK(pm.weights_hash == m.weights_hash);
  CHECK(pm.inputs.at("weights") == pconfig.backend.weights);

  dea::RunConfig missing = small_run(fresh_dir("profile_missing"));
  missing.backend.weights = (fs::path(dir) / "absent.bin").string();
  CHECK_THROWS_AS(dea::cmd_profile_attention(missing), dea::Error);
}

TEST_CASE("profile command end to end") {
  clear_env();
  std::string dir = fresh_dir("profile");
  dea::RunConfig config = small_run(dir);
  config.profile.timesteps = 3;
  dea::RunManifest m = dea::cmd_profile_attention(config);
  CHECK(m.command == "profile-attention");
  CHECK(m.extra.at("pooled").contains("t_f_mean"));
  check_manifest_covers_dir(m, dir);

  std::string by_t = slurp(fs::path(dir) / "attention_by_timestep.txt");
  size_t count = 0;
  for (size_t pos = by_t.find("\nt="); pos != std::string::npos; pos = by_t.find("\nt=", pos + 1))
    ++count;
  CHECK(count == 3);
  CHECK_FALSE(slurp(fs::path(dir) / "attention_stats.txt").empty());
}

TEST_CASE("run_cli exit codes") {
  clear_env();
  CHECK(call_cli({"--help"}) == 0);
  CHECK(call_cli({}) == 2);
  CHECK(call_cli({"bogus-subcommand"}) == 2);
  CHECK(call_cli({"attack", "--epsilon", "0", "--output-dir", fresh_dir("cli_bad")}) == 2);
  CHECK(call_cli({"eval", "--output-dir", fresh_dir("cli_eval_bad")}) == 2);
  CHECK(call_cli({"eval", "--generated", "/nonexistent_dea_dir", "--truth",
                  "/nonexistent_dea_dir", "--output-dir", fresh_dir("cli_eval_miss")}) == 3);

  std::string dir = fresh_dir("cli_ok");
  fs::path cfg = fs::path(dir) / "config.json";
  std::ofstream(cfg) << small_run(dir).to_json().dump(2);
  CHECK(call_cli({"profile-attention", "--config", cfg.string(), "--timesteps", "2"}) == 0);
  CHECK(fs::exists(fs::path(dir) / "manifest.json"));
}

TEST_CASE("output dir precedence is flag over env over file") {
  clear_env();
  std::string file_dir = fresh_dir("prec_file");
  std::string env_dir = fresh_dir("prec_env");
  std::string cli_dir = fresh_dir("prec_cli");
  fs::path cfg = fs::path(file_dir) / "config.json";
  std::ofstream(cfg) << small_run(file_dir).to_json().dump(2);

  setenv("DEA_OUTPUT_DIR", env_dir.c_str(), 1);
  CHECK(call_cli({"profile-attention", "--config", cfg.string()}) == 0);
  CHECK(fs::exists(fs::path(env_dir) / "manifest.json"));
  CHECK_FALSE(fs::exists(fs::path(file_dir) / "manifest.json"));

  CHECK(call_cli({"profile-attention", "--config", cfg.string(), "--output-dir", cli_dir}) == 0);
  CHECK(fs::exists(fs::path(cli_dir) / "manifest.json"));
  clear_env();
}
