#include "dea/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dea/attack.hpp"
#include "dea/defense.hpp"
#include "dea/error.hpp"
#include "dea/image_io.hpp"
#include "dea/mask.hpp"
#include "dea/metrics.hpp"
#include "dea/scene.hpp"
#include "dea/toy.hpp"
#include "dea/trace.hpp"

namespace dea {
namespace {

namespace fs = std::filesystem;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path prepare_output_dir(const RunConfig& config) {
  fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(Errc::io_error, "cannot create output dir: " + dir.string());
  return dir;
}

// Manifest output entries stay relative to the output dir unless given
// absolute; this maps a stored entry back to a filesystem path.
fs::path stored_to_fs(const fs::path& dir, const std::string& stored) {
  fs::path p(stored);
  return p.is_absolute() ? p : dir / p;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) raise(Errc::io_error, "cannot write: " + path.string());
  out << text;
  if (!out) raise(Errc::io_error, "failed writing: " + path.string());
}

std::unique_ptr<ToyBackend> make_backend(RunConfig& config) {
  if (!config.backend.weights.empty()) {
    if (!fs::exists(config.backend.weights))
      raise(Errc::config_error, "backend.weights: file not found: " + config.backend.weights);
    auto backend = std::make_unique<ToyBackend>(ToyBackend::load_weights(config.backend.weights));
    config.backend.toy = backend->toy_config();
    return backend;
  }
  return std::make_unique<ToyBackend>(config.backend.toy);
}

struct ResolvedInput {
  Image image;
  std::string source;
};

ResolvedInput resolve_input_image(const RunConfig& config, const BackendInfo& info) {
  ResolvedInput out;
  if (config.input.image.empty()) {
    std::vector<ProceduralScene> scenes = make_dataset(1, info.n_views, 0);
    out.image = render_input(scenes[0], info.image_side);
    out.source = "procedural:sample0";
    return out;
  }
  if (!fs::exists(config.input.image))
    raise(Errc::config_error, "input.image: file not found: " + config.input.image);
  out.image = read_image(config.input.image);
  if (out.image.height() != info.image_side || out.image.width() != info.image_side)
    raise(Errc::config_error, "input.image: backend expects " + std::to_string(info.image_side) +
                                  "x" + std::to_string(info.image_side) + ", got " +
                                  std::to_string(out.image.height()) + "x" +
                                  std::to_string(out.image.width()));
  out.source = config.input.image;
  return out;
}

ForegroundMask resolve_mask(const RunConfig& config, const Image& image) {
  const std::string& policy = config.input.mask_policy;
  if (policy == "file" || (policy == "auto" && !config.input.mask.empty())) {
    if (!fs::exists(config.input.mask))
      raise(Errc::config_error, "input.mask: file not found: " + config.input.mask);
    Image m = read_image(config.input.mask);
    if (m.height() != image.height() || m.width() != image.width())
      raise(Errc::config_error, "input.mask: size does not match the input image");
    return mask_from_file_image(m);
  }
  if (policy == "alpha") return mask_from_alpha(image);
  if (policy == "color") return mask_from_corner_color(image, config.input.tau);
  return extract_foreground_mask(image, config.input.tau);
}

void parallel_for(long n, long workers, const std::function<void(long)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  long count = std::min(workers, n);
  pool.reserve(static_cast<size_t>(count));
  for (long w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        long i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> guard(err_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

nlohmann::json row_json(const TraceRow& r) {
  return {{"epoch", r.epoch},     {"t", r.t},
          {"l_fe", r.l_fe},       {"l_ae", r.l_ae},
          {"l_de", r.l_de},       {"t_f_mean", r.t_f_mean},
          {"t_b_mean", r.t_b_mean}, {"linf_delta", r.linf_delta}};
}

}  // namespace

RunManifest cmd_attack(const RunConfig& config_in) {
  Timer timer;
  RunConfig config = config_in;
  config.validate();
  fs::path dir = prepare_output_dir(config);
  std::unique_ptr<ToyBackend> backend = make_backend(config);
  ResolvedInput input = resolve_input_image(config, backend->info());
  ForegroundMask mask = resolve_mask(config, input.image);

  AttackResult result = run_attack(*backend, input.image, mask, config.attack);

  std::string image_hash = hash_image(input.image);
  write_image((dir / "adversarial.png").string(), result.adversarial);
  write_image((dir / "mask.png").string(), mask_to_image(mask));
  write_trace((dir / "attack_trace.txt").string(), result.trace.rows, config.to_json(),
              image_hash);

  RunManifest m;
  m.command = "attack";
  m.config = config;
  m.seeds = {{"attack", config.attack.seed}};
  m.backend_id = backend->info().id;
  m.weights_hash = backend->weights_fingerprint();
  m.inputs = {{"image", input.source},
              {"image_hash", image_hash},
              {"mask_policy", config.input.mask_policy},
              {"mask_source", mask_source_name(mask.source)},
              {"mask_foreground", mask.foreground_count()}};
  if (!config.backend.weights.empty()) m.inputs["weights"] = config.backend.weights;
  m.outputs = {"adversarial.png", "mask.png", "attack_trace.txt"};
  if (!result.trace.rows.empty()) {
    m.extra["initial"] = row_json(result.trace.rows.front());
    m.extra["final"] = row_json(result.trace.rows.back());
  }
  m.duration_seconds = timer.seconds();
  m.complete = true;
  m.save((dir / "manifest.json").string());
  return m;
}

RunManifest cmd_train_toy(const RunConfig& config_in) {
  Timer timer;
  RunConfig config = config_in;
  config.validate();
  fs::path dir = prepare_output_dir(config);
  std::unique_ptr<ToyBackend> backend = make_backend(config);
  std::vector<ProceduralScene> scenes =
      make_dataset(config.train.scenes, config.backend.toy.n_views, config.train.seed);

  std::vector<double> curve =
      train_toy(*backend, scenes, config.train.epochs, config.train.lr, config.train.seed);

  std::vector<std::string> outputs;
  std::string weights_stored = config.train.out_weights;
  fs::path weights_path = stored_to_fs(dir, weights_stored);
  backend->save_weights(weights_path.string());
  outputs.push_back(weights_stored);

  std::ostringstream curve_text;
  curve_text << "# dea-train-curve v1\n";
  for (size_t i = 0; i < curve.size(); ++i)
    curve_text << "epoch=" << i << " loss=" << fmt17(curve[i]) << "\n";
  write_text_file(dir / "loss_curve.txt", curve_text.str());
  outputs.push_back("loss_curve.txt");

  if (!config.train.dataset_dir.empty()) {
    std::string ds_stored = config.train.dataset_dir;
    fs::path ds = stored_to_fs(dir, ds_stored);
    fs::create_directories(ds);
    save_scene_set(ds.string(), scenes, config.backend.toy.image_side);
    auto stored_name = [&](const std::string& file) {
      return (fs::path(ds_stored) / file).generic_string();
    };
    outputs.push_back(stored_name("scenes.txt"));
    for (size_t i = 0; i < scenes.size(); ++i)
      for (long v = 0; v < config.backend.toy.n_views; ++v)
        for (long d = 0; d < config.backend.toy.n_domains; ++d) {
          char name[64];
          std::snprintf(name, sizeof(name), "scene_%04zu_v%ld_d%ld.png", i, v, d);
          outputs.push_back(stored_name(name));
        }
  }

  RunManifest m;
  m.command = "train-toy";
  m.config = config;
  m.seeds = {{"train", config.train.seed}};
  m.backend_id = backend->info().id;
  m.weights_hash = backend->weights_fingerprint();
  m.inputs = {{"scenes", config.train.scenes}};
  if (!config.backend.weights.empty()) m.inputs["weights"] = config.backend.weights;
  m.outputs = outputs;
  if (!curve.empty()) {
    m.extra["initial_loss"] = curve.front();
    m.extra["final_loss"] = curve.back();
  }
  m.extra["epochs"] = config.train.epochs;
  m.duration_seconds = timer.seconds();
  m.complete = true;
  m.save((dir / "manifest.json").string());
  return m;
}

RunManifest cmd_gen_views(const RunConfig& config_in) {
  Timer timer;
  RunConfig config = config_in;
  config.validate();
  fs::path dir = prepare_output_dir(config);
  std::unique_ptr<ToyBackend> backend = make_backend(config);
  ResolvedInput input = resolve_input_image(config, backend->info());
  DefenseSpec defense = parse_defense_spec(config.generate.defense);
  Image prepped = apply_defense(input.image, defense);

  std::vector<GeneratedView> views =
      generate_views(*backend, prepped, config.generate.steps, config.generate.seed);

  fs::create_directories(dir / "views");
  std::vector<std::string> outputs;
  for (const GeneratedView& gv : views) {
    char name[64];
    std::snprintf(name, sizeof(name), "views/view_v%ld_d%ld.png", gv.slot.view, gv.slot.domain);
    write_image((dir / name).string(), gv.image);
    outputs.emplace_back(name);
  }

  RunManifest m;
  m.command = "gen-views";
  m.config = config;
  m.seeds = {{"generate", config.generate.seed}};
  m.backend_id = backend->info().id;
  m.weights_hash = backend->weights_fingerprint();
  m.inputs = {{"image", input.source},
              {"image_hash", hash_image(input.image)},
              {"defense", defense_spec_to_string(defense)}};
  if (!config.backend.weights.empty()) m.inputs["weights"] = config.backend.weights;
  m.outputs = outputs;
  m.extra["steps"] = config.generate.steps;
  m.extra["slots"] = static_cast<long>(views.size());
  m.duration_seconds = timer.seconds();
  m.complete = true;
  m.save((dir / "manifest.json").string());
  return m;
}

RunManifest cmd_eval(const RunConfig& config_in) {
  Timer timer;
  RunConfig config = config_in;
  config.validate();
  if (config.eval.generated_dir.empty())
    raise(Errc::config_error, "eval.generated_dir: required");
  if (config.eval.truth_dir.empty()) raise(Errc::config_error, "eval.truth_dir: required");
  if (config.eval.cloud_a.empty() != config.eval.cloud_b.empty())
    raise(Errc::config_error, "eval.cloud_a/cloud_b: set both or neither");
  fs::path dir = prepare_output_dir(config);
  fs::path generated(config.eval.generated_dir);
  fs::path truth(config.eval.truth_dir);
  if (!fs::is_directory(generated))
    raise(Errc::missing_artifact, "generated dir not found: " + generated.string());
  if (!fs::is_directory(truth))
    raise(Errc::missing_artifact, "ground-truth dir not found: " + truth.string());
  DefenseSpec defense = parse_defense_spec(config.eval.defense);

  std::vector<std::string> names;
  for (const fs::directory_entry& entry : fs::directory_iterator(generated)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    raise(Errc::missing_artifact, "no generated images in " + generated.string());
  for (const std::string& name : names)
    if (!fs::exists(truth / name))
      raise(Errc::missing_artifact, "missing ground truth for " + name);

  const long n = static_cast<long>(names.size());
  std::vector<ViewMetrics> per(names.size());
  std::vector<PerceptualResult> perceptual(names.size());
  parallel_for(n, config.eval.workers, [&](long i) {
    const std::string& name = names[static_cast<size_t>(i)];
    Image cand = apply_defense(read_image((generated / name).string()), defense);
    Image ref = read_image((truth / name).string());
    ViewMetrics vm;
    long v = 0, d = 0;
    if (std::sscanf(name.c_str(), "view_v%ld_d%ld", &v, &d) == 2) {
      vm.view = v;
      vm.domain = d;
    } else {
      vm.view = i;
      vm.domain = 0;
    }
    vm.ssim = ssim(cand, ref);
    perceptual[static_cast<size_t>(i)] = perceptual_distance(cand, ref);
    vm.perceptual = perceptual[static_cast<size_t>(i)].value;
    per[static_cast<size_t>(i)] = vm;
  });

  MetricsReport report;
  report.per_view = per;
  for (const ViewMetrics& vm : per) {
    report.ssim_mean += vm.ssim;
    report.perceptual_mean += vm.perceptual;
  }
  report.ssim_mean /= static_cast<double>(n);
  report.perceptual_mean /= static_cast<double>(n);
  report.perceptual_surrogate = perceptual.front().surrogate;
  report.perceptual_id = perceptual.front().id;

  nlohmann::json inputs = {{"generated_dir", config.eval.generated_dir},
                           {"truth_dir", config.eval.truth_dir},
                           {"pairs", n}};
  if (!config.eval.cloud_a.empty()) {
    if (!fs::exists(config.eval.cloud_a))
      raise(Errc::missing_artifact, "point cloud not found: " + config.eval.cloud_a);
    if (!fs::exists(config.eval.cloud_b))
      raise(Errc::missing_artifact, "point cloud not found: " + config.eval.cloud_b);
    report.has_chamfer = true;
    report.chamfer =
        chamfer_distance(read_pointcloud(config.eval.cloud_a), read_pointcloud(config.eval.cloud_b));
    inputs["cloud_a"] = config.eval.cloud_a;
    inputs["cloud_b"] = config.eval.cloud_b;
  }

  write_text_file(dir / "metrics_report.txt", report_to_text(report));

  RunManifest m;
  m.command = "eval";
  m.config = config;
  m.seeds = nlohmann::json::object();
  m.backend_id = "none";
  m.weights_hash = "none";
  m.inputs = inputs;
  m.outputs = {"metrics_report.txt"};
  m.extra["defense"] = defense_spec_to_string(defense);
  m.extra["workers"] = config.eval.workers;
  m.extra["ssim_mean"] = report.ssim_mean;
  m.extra["perceptual_mean"] = report.perceptual_mean;
  if (report.has_chamfer) m.extra["chamfer"] = report.chamfer;
  m.duration_seconds = timer.seconds();
  m.complete = true;
  m.save((dir / "manifest.json").string());
  return m;
}

RunManifest cmd_profile_attention(const RunConfig& config_in) {
  Timer timer;
  RunConfig config = config_in;
  config.validate();
  fs::path dir = prepare_output_dir(config);
  std::unique_ptr<ToyBackend> backend = make_backend(config);
  ResolvedInput input = resolve_input_image(config, backend->info());
  ForegroundMask mask = resolve_mask(config, input.image);

  ProfileResult prof =
      profile_attention(*backend, input.image, mask, config.profile.timesteps, config.profile.seed);

  write_text_file(dir / "attention_stats.txt", stats_to_text(prof.pooled));
  std::ostringstream by_t;
  by_t << "# dea-attention-profile v1\n";
  for (const auto& [t, stats] : prof.per_timestep)
    by_t << "t=" << t << " t_f_mean=" << fmt17(stats.t_f_mean)
         << " t_b_mean=" << fmt17(stats.t_b_mean) << "\n";
  write_text_file(dir / "attention_by_timestep.txt", by_t.str());

  RunManifest m;
  m.command = "profile-attention";
  m.config = config;
  m.seeds = {{"profile", config.profile.seed}};
  m.backend_id = backend->info().id;
  m.weights_hash = backend->weights_fingerprint();
  m.inputs = {{"image", input.source},
              {"image_hash", hash_image(input.image)},
              {"mask_source", mask_source_name(mask.source)}};
  if (!config.backend.weights.empty()) m.inputs["weights"] = config.backend.weights;
  m.outputs = {"attention_stats.txt", "attention_by_timestep.txt"};
  m.extra["pooled"] = {{"t_f_mean", prof.pooled.t_f_mean}, {"t_b_mean", prof.pooled.t_b_mean}};
  m.extra["timesteps"] = config.profile.timesteps;
  m.duration_seconds = timer.seconds();
  m.complete = true;
  m.save((dir / "manifest.json").string());
  return m;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"dual erasure protection toolkit for multi-view diffusion backends"};
  app.require_subcommand(1);

  std::string config_path, output_dir, image, mask_path, mask_policy, weights;
  std::string layers, loss_mode, defense, generated, truth, cloud_a, cloud_b;
  std::string out_weights, dataset_dir;
  double epsilon = 0, step = 0, alpha = 0, lr = 0, tau = 0;
  long epochs = 0, steps = 0, timesteps = 0, workers = 0, scene_count = 0;
  uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (json; a manifest works too)");
    sub->add_option("--output-dir", output_dir, "artifact directory");
  };
  auto add_input = [&](CLI::App* sub) {
    sub->add_option("--image", image, "input image (omit for the bundled sample scene)");
    sub->add_option("--mask", mask_path, "foreground mask image");
    sub->add_option("--mask-policy", mask_policy, "auto | alpha | color | file");
    sub->add_option("--tau", tau, "background color distance threshold");
    sub->add_option("--weights", weights, "backend weights file");
  };

  CLI::App* atk = app.add_subcommand("attack", "craft an adversarial perturbation");
  add_common(atk);
  add_input(atk);
  atk->add_option("--epsilon", epsilon, "perturbation bound in 8-bit levels");
  atk->add_option("--step", step, "per-epoch step in 8-bit levels");
  atk->add_option("--alpha", alpha, "feature-erasure weight");
  atk->add_option("--epochs", epochs, "optimization epochs");
  atk->add_option("--seed", seed, "attack seed");
  atk->add_option("--layers", layers, "all | lowest");
  atk->add_option("--loss-mode", loss_mode, "dual | attention_only | feature_only");

  CLI::App* ev = app.add_subcommand("eval", "score generated views against ground truth");
  add_common(ev);
  ev->add_option("--generated", generated, "directory of generated views");
  ev->add_option("--truth", truth, "directory of ground-truth views");
  ev->add_option("--defense", defense, "none | squeeze:bits=B | smooth:kernel=K");
  ev->add_option("--cloud-a", cloud_a, "point cloud (xyz or ascii ply)");
  ev->add_option("--cloud-b", cloud_b, "point cloud (xyz or ascii ply)");
  ev->add_option("--workers", workers, "worker threads for the pair loop");

  CLI::App* prof = app.add_subcommand("profile-attention", "foreground/background attention stats");
  add_common(prof);
  add_input(prof);
  prof->add_option("--timesteps", timesteps, "sampled timesteps");
  prof->add_option("--seed", seed, "profile seed");

  CLI::App* tr = app.add_subcommand("train-toy", "train the toy backend on procedural scenes");
  add_common(tr);
  tr->add_option("--scenes", scene_count, "scene count");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--lr", lr, "Adam learning rate");
  tr->add_option("--seed", seed, "training seed");
  tr->add_option("--out", out_weights, "weights file name (relative to output dir)");
  tr->add_option("--dataset-dir", dataset_dir, "persist scene renders here");
  tr->add_option("--weights", weights, "starting weights (fine-tune)");

  CLI::App* gen = app.add_subcommand("gen-views", "run the denoising loop and save views");
  add_common(gen);
  add_input(gen);
  gen->add_option("--steps", steps, "denoising steps");
  gen->add_option("--seed", seed, "generation seed");
  gen->add_option("--defense", defense, "input preprocessing before generation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) {
      config = RunConfig::load(config_path);
    } else {
      apply_env_overrides(config);
    }
    CLI::App* sub = app.get_subcommands().front();
    auto given = [&](const char* name) { return sub->count(name) > 0; };

    if (given("--output-dir")) config.output_dir = output_dir;
    if (sub == atk || sub == prof || sub == gen) {
      if (given("--image")) config.input.image = image;
      if (given("--mask")) {
        config.input.mask = mask_path;
        if (!given("--mask-policy")) config.input.mask_policy = "file";
      }
      if (given("--mask-policy")) config.input.mask_policy = mask_policy;
      if (given("--tau")) config.input.tau = tau;
      if (given("--weights")) config.backend.weights = weights;
    }
    if (sub == atk) {
      if (given("--epsilon")) config.attack.epsilon = epsilon;
      if (given("--step")) config.attack.step_size = step;
      if (given("--alpha")) config.attack.alpha = alpha;
      if (given("--epochs")) config.attack.max_epoch = epochs;
      if (given("--seed")) config.attack.seed = seed;
      if (given("--layers")) config.attack.attention_layers = layer_selection_from_name(layers);
      if (given("--loss-mode")) config.attack.loss_mode = loss_mode_from_name(loss_mode);
    } else if (sub == ev) {
      if (given("--generated")) config.eval.generated_dir = generated;
      if (given("--truth")) config.eval.truth_dir = truth;
      if (given("--defense")) config.eval.defense = defense;
      if (given("--cloud-a")) config.eval.cloud_a = cloud_a;
      if (given("--cloud-b")) config.eval.cloud_b = cloud_b;
      if (given("--workers")) config.eval.workers = workers;
    } else if (sub == prof) {
      if (given("--timesteps")) config.profile.timesteps = timesteps;
      if (given("--seed")) config.profile.seed = seed;
    } else if (sub == tr) {
      if (given("--scenes")) config.train.scenes = scene_count;
      if (given("--epochs")) config.train.epochs = epochs;
      if (given("--lr")) config.train.lr = lr;
      if (given("--seed")) config.train.seed = seed;
      if (given("--out")) config.train.out_weights = out_weights;
      if (given("--dataset-dir")) config.train.dataset_dir = dataset_dir;
      if (given("--weights")) config.backend.weights = weights;
    } else if (sub == gen) {
      if (given("--steps")) config.generate.steps = steps;
      if (given("--seed")) config.generate.seed = seed;
      if (given("--defense")) config.generate.defense = defense;
    }
    config.validate();

    RunManifest manifest;
    if (sub == atk) manifest = cmd_attack(config);
    else if (sub == ev) manifest = cmd_eval(config);
    else if (sub == prof) manifest = cmd_profile_attention(config);
    else if (sub == tr) manifest = cmd_train_toy(config);
    else manifest = cmd_gen_views(config);

    std::cout << manifest.command << ": ok (" << manifest.outputs.size() << " artifacts in "
              << config.output_dir << ", " << fmt17(manifest.duration_seconds) << " s)\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == Errc::config_error ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace dea
