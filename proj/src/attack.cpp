#include "dea/attack.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dea/rng.hpp"

namespace dea {

const char* layer_selection_name(AttentionLayerSelection s) {
  return s == AttentionLayerSelection::all ? "all" : "lowest";
}

AttentionLayerSelection layer_selection_from_name(const std::string& name) {
  if (name == "all") return AttentionLayerSelection::all;
  if (name == "lowest") return AttentionLayerSelection::lowest;
  raise(Errc::config_error, "attack.attention_layers must be all or lowest");
}

const char* loss_mode_name(LossMode m) {
  switch (m) {
    case LossMode::dual: return "dual";
    case LossMode::attention_only: return "attention_only";
    case LossMode::feature_only: return "feature_only";
  }
  return "unknown";
}

LossMode loss_mode_from_name(const std::string& name) {
  if (name == "dual") return LossMode::dual;
  if (name == "attention_only") return LossMode::attention_only;
  if (name == "feature_only") return LossMode::feature_only;
  raise(Errc::config_error,
        "attack.loss_mode must be dual, attention_only, or feature_only");
}

void AttackConfig::validate() const {
  if (!(step_size > 0.0) || !(step_size <= epsilon))
    raise(Errc::config_error, "attack requires 0 < step_size <= epsilon");
  if (epsilon > 255.0)
    raise(Errc::config_error, "attack.epsilon is in 8-bit levels, at most 255");
  if (max_epoch < 1) raise(Errc::config_error, "attack.max_epoch must be >= 1");
  if (alpha < 0.0) raise(Errc::config_error, "attack.alpha must be >= 0");
  if (denoise_steps_eval < 1)
    raise(Errc::config_error, "attack.denoise_steps_eval must be >= 1");
}

namespace {

class MaskCache {
 public:
  MaskCache(const ForegroundMask& mask, const BackendInfo& info)
      : mask_(mask), info_(info) {}

  const AttentionMask& get(AttentionKind kind, long d_seq) {
    const auto key = std::make_pair(kind, d_seq);
    auto it = cache_.find(key);
    if (it == cache_.end())
      it = cache_
               .emplace(key, build_attention_mask(mask_, d_seq, kind,
                                                  info_.n_views, info_.n_domains))
               .first;
    return it->second;
  }

  std::vector<AttentionMask> for_captures(const std::vector<AttentionCapture>& cs) {
    std::vector<AttentionMask> out;
    out.reserve(cs.size());
    for (const auto& c : cs) out.push_back(get(c.kind, c.d_seq));
    return out;
  }

 private:
  const ForegroundMask& mask_;
  const BackendInfo& info_;
  std::map<std::pair<AttentionKind, long>, AttentionMask> cache_;
};

struct EpochEval {
  ad::Tensor loss;
  ad::Tensor delta;
  LossBreakdown breakdown;
  AttentionStats stats;
};

std::vector<AttentionCapture> select_captures(
    const std::vector<AttentionCapture>& captures, AttentionLayerSelection sel) {
  if (sel == AttentionLayerSelection::all) return captures;
  std::vector<AttentionCapture> out;
  for (const auto& c : captures)
    if (c.resolution_rank == 0) out.push_back(c);
  return out;
}

EpochEval eval_epoch(const ModelBackend& backend, const BackendInfo& info,
                     const Eigen::MatrixXd& x0, const Eigen::MatrixXd& z_clean,
                     const Eigen::MatrixXd& delta_value, long t,
                     const std::vector<Eigen::MatrixXd>& noises,
                     MaskCache& masks, const AttackConfig& config) {
  EpochEval ev;
  ev.delta = ad::Tensor::leaf(delta_value);
  ad::Tensor x_adv = ad::clamp01(ad::add(ad::Tensor::constant(x0), ev.delta));

  ad::Tensor z;
  DenoiseOutput out;
  try {
    z = backend.encode(x_adv);
    BatchedLatent batch = expand_batch(z, info);
    std::vector<ad::Tensor> z_t;
    z_t.reserve(batch.slots.size());
    for (size_t b = 0; b < batch.slots.size(); ++b)
      z_t.push_back(
          forward_noise(batch.slots[b], backend.schedule(), t, noises[b]));
    Condition cond{z, batch.ids};
    out = backend.denoise_with_capture(z_t, t, cond);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(Errc::backend_failure, std::string("backend forward failed: ") + e.what());
  }
  if (out.captures.empty())
    raise(Errc::backend_failure, "backend produced no attention captures");

  ev.stats = aggregate_lowest_dim(out.captures, masks.for_captures(out.captures));

  const std::vector<AttentionCapture> selected =
      select_captures(out.captures, config.attention_layers);
  long n_maps = 0;
  ad::Tensor l_ae = attention_erasure_loss(selected, masks.for_captures(selected),
                                           &n_maps);
  ad::Tensor l_fe = feature_erasure_loss(z, z_clean);

  switch (config.loss_mode) {
    case LossMode::dual:
      ev.loss = dual_loss(l_ae, l_fe, config.alpha);
      break;
    case LossMode::attention_only:
      ev.loss = l_ae;
      n_maps = long(selected.size());
      break;
    case LossMode::feature_only:
      ev.loss = ad::scale(l_fe, config.alpha);
      n_maps = 0;
      break;
  }
  ev.breakdown.l_ae = ad::item(l_ae);
  ev.breakdown.l_fe = ad::item(l_fe);
  ev.breakdown.l_de = ad::item(ev.loss);
  ev.breakdown.alpha = config.alpha;
  ev.breakdown.n_maps = config.loss_mode == LossMode::dual ? long(selected.size())
                                                           : n_maps;
  return ev;
}

void check_attack_inputs(const Image& image, const ForegroundMask& mask) {
  if (image.empty()) raise(Errc::config_error, "attack input image is empty");
  for (const auto& p : image.planes)
    if ((p.array() < 0.0).any() || (p.array() > 1.0).any())
      raise(Errc::config_error, "attack input image must lie in [0,1]");
  if (mask.height() != image.height() || mask.width() != image.width())
    raise(Errc::degenerate_mask, "mask size differs from image size");
  const double total = mask.grid.sum();
  if (total <= 0.0 || total >= double(mask.grid.size()))
    raise(Errc::degenerate_mask, "mask must contain both classes");
}

}  // namespace

AttackResult run_attack(const ModelBackend& backend, const Image& image,
                        const ForegroundMask& mask, const AttackConfig& config) {
  config.validate();
  check_attack_inputs(image, mask);
  const BackendInfo info = backend.info();
  const Eigen::MatrixXd x0 = image_to_tokens(image);
  const double eps = config.epsilon / 255.0;
  const double step = config.step_size / 255.0;

  Eigen::MatrixXd z_clean;
  try {
    z_clean = backend.encode(ad::Tensor::constant(x0)).value();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(Errc::backend_failure, std::string("clean encode failed: ") + e.what());
  }

  MaskCache masks(mask, info);
  Rng rng(derive_seed(config.seed, 0x41545441ull));
  Eigen::MatrixXd delta(x0.rows(), x0.cols());
  for (long r = 0; r < delta.rows(); ++r)
    for (long c = 0; c < delta.cols(); ++c) delta(r, c) = rng.uniform(-eps, eps);

  AttackTrace trace;
  trace.rows.reserve(size_t(config.max_epoch));
  for (long epoch = 0; epoch < config.max_epoch; ++epoch) {
    const long t = rng.uniform_int(1, info.t_max);
    std::vector<Eigen::MatrixXd> noises;
    noises.reserve(size_t(info.batch()));
    for (long b = 0; b < info.batch(); ++b)
      noises.push_back(normal_matrix(rng, info.d_seq(), info.latent_channels));

    EpochEval ev =
        eval_epoch(backend, info, x0, z_clean, delta, t, noises, masks, config);
    if (!std::isfinite(ev.breakdown.l_de) || !std::isfinite(ev.breakdown.l_fe) ||
        !std::isfinite(ev.breakdown.l_ae)) {
      trace.delta_tokens = delta;
      throw NonFiniteLossError("loss became non-finite at epoch " +
                                   std::to_string(epoch),
                               std::move(trace));
    }
    trace.rows.push_back({epoch, t, ev.breakdown.l_fe, ev.breakdown.l_ae,
                          ev.breakdown.l_de, ev.stats.t_f_mean, ev.stats.t_b_mean,
                          delta.cwiseAbs().maxCoeff()});

    ad::backward(ev.loss);
    const Eigen::MatrixXd g = ev.delta.grad();
    for (long r = 0; r < delta.rows(); ++r)
      for (long c = 0; c < delta.cols(); ++c) {
        const double s = g(r, c) > 0.0 ? 1.0 : (g(r, c) < 0.0 ? -1.0 : 0.0);
        delta(r, c) = std::clamp(delta(r, c) - step * s, -eps, eps);
      }
  }

  trace.delta_tokens = delta;
  AttackResult result;
  const Eigen::MatrixXd adv =
      (x0 + delta).cwiseMax(0.0).cwiseMin(1.0);
  result.adversarial = tokens_to_image(adv, image.height(), image.width());
  result.trace = std::move(trace);
  return result;
}

AttackProblem::AttackProblem(const ModelBackend& backend, const Image& image,
                             const ForegroundMask& mask,
                             const AttackConfig& config, long t,
                             uint64_t noise_seed)
    : backend_(backend), config_(config), mask_(mask), t_(t) {
  config_.validate();
  check_attack_inputs(image, mask_);
  const BackendInfo info = backend_.info();
  if (t_ < 1 || t_ > info.t_max)
    raise(Errc::config_error, "frozen timestep outside [1, t_max]");
  x0_ = image_to_tokens(image);
  z_clean_ = backend_.encode(ad::Tensor::constant(x0_)).value();
  Rng rng(derive_seed(noise_seed, 0x46524f5aull));
  for (long b = 0; b < info.batch(); ++b)
    noises_.push_back(normal_matrix(rng, info.d_seq(), info.latent_channels));
}

LossBreakdown AttackProblem::eval(const Eigen::MatrixXd& delta_tokens,
                                  Eigen::MatrixXd* grad_out) const {
  if (delta_tokens.rows() != x0_.rows() || delta_tokens.cols() != x0_.cols())
    raise(Errc::shape_mismatch, "delta shape differs from image tokens");
  const BackendInfo info = backend_.info();
  MaskCache masks(mask_, info);
  EpochEval ev = eval_epoch(backend_, info, x0_, z_clean_, delta_tokens, t_,
                            noises_, masks, config_);
  if (grad_out) {
    ad::backward(ev.loss);
    *grad_out = ev.delta.grad();
  }
  return ev.breakdown;
}

ProfileResult profile_attention(const ModelBackend& backend, const Image& image,
                                const ForegroundMask& mask, long n_timesteps,
                                uint64_t seed) {
  if (n_timesteps < 1) raise(Errc::config_error, "n_timesteps must be >= 1");
  check_attack_inputs(image, mask);
  const BackendInfo info = backend.info();
  const Eigen::MatrixXd x0 = image_to_tokens(image);
  const ad::Tensor z = ad::Tensor::constant(
      backend.encode(ad::Tensor::constant(x0)).value());
  MaskCache masks(mask, info);
  Rng rng(derive_seed(seed, 0x50524f46ull));

  ProfileResult result;
  std::map<std::string, LayerScore> pooled_layers;
  std::map<std::string, long> layer_counts;
  for (long i = 0; i < n_timesteps; ++i) {
    const long t = rng.uniform_int(1, info.t_max);
    BatchedLatent batch = expand_batch(z, info);
    std::vector<ad::Tensor> z_t;
    for (size_t b = 0; b < batch.slots.size(); ++b)
      z_t.push_back(forward_noise(batch.slots[b], backend.schedule(), t,
                                  normal_matrix(rng, info.d_seq(),
                                                info.latent_channels)));
    Condition cond{z, batch.ids};
    DenoiseOutput out = backend.denoise_with_capture(z_t, t, cond);
    AttentionStats stats =
        aggregate_lowest_dim(out.captures, masks.for_captures(out.captures));
    for (const auto& row : stats.per_layer) {
      auto [it, fresh] = pooled_layers.try_emplace(row.layer_id, row);
      if (!fresh) {
        it->second.t_f_mean += row.t_f_mean;
        it->second.t_b_mean += row.t_b_mean;
      }
      ++layer_counts[row.layer_id];
    }
    result.pooled.t_f_mean += stats.t_f_mean;
    result.pooled.t_b_mean += stats.t_b_mean;
    result.per_timestep.emplace_back(t, std::move(stats));
  }
  result.pooled.t_f_mean /= double(n_timesteps);
  result.pooled.t_b_mean /= double(n_timesteps);
  for (auto& [id, score] : pooled_layers) {
    score.t_f_mean /= double(layer_counts[id]);
    score.t_b_mean /= double(layer_counts[id]);
    result.pooled.per_layer.push_back(score);
  }
  return result;
}

}  // namespace dea
