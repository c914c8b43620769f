#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dea/attention.hpp"
#include "dea/backend.hpp"
#include "dea/error.hpp"
#include "dea/image.hpp"
#include "dea/losses.hpp"
#include "dea/mask.hpp"

namespace dea {

enum class AttentionLayerSelection { all, lowest };
enum class LossMode { dual, attention_only, feature_only };

const char* layer_selection_name(AttentionLayerSelection s);
AttentionLayerSelection layer_selection_from_name(const std::string& name);
const char* loss_mode_name(LossMode m);
LossMode loss_mode_from_name(const std::string& name);

struct AttackConfig {
  double epsilon = 16.0;    // infinity-norm bound in 8-bit levels
  double step_size = 2.0;   // per-epoch magnitude in 8-bit levels
  double alpha = 1.0;
  long max_epoch = 100;
  uint64_t seed = 0;
  AttentionLayerSelection attention_layers = AttentionLayerSelection::all;
  LossMode loss_mode = LossMode::dual;
  long denoise_steps_eval = 20;

  void validate() const;
};

struct TraceRow {
  long epoch = 0;
  long t = 0;
  double l_fe = 0.0;
  double l_ae = 0.0;
  double l_de = 0.0;
  double t_f_mean = 0.0;
  double t_b_mean = 0.0;
  double linf_delta = 0.0;
};

struct AttackTrace {
  std::vector<TraceRow> rows;
  Eigen::MatrixXd delta_tokens;  // (H*W, 3)
};

struct AttackResult {
  Image adversarial;
  AttackTrace trace;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& msg, AttackTrace partial_trace)
      : Error(Errc::non_finite_loss, msg), partial(std::move(partial_trace)) {}
  AttackTrace partial;
};

// PGD over the input perturbation: per epoch sample a timestep, noise the
// adversarial latent, run the backend with capture, and take a signed-gradient
// step down the dual erasure loss, projected back into the epsilon ball.
AttackResult run_attack(const ModelBackend& backend, const Image& image,
                        const ForegroundMask& mask, const AttackConfig& config);

// Loss evaluation with frozen timestep and noise draws, for derivative
// verification. Delta is an (H*W, 3) token matrix.
class AttackProblem {
 public:
  AttackProblem(const ModelBackend& backend, const Image& image,
                const ForegroundMask& mask, const AttackConfig& config, long t,
                uint64_t noise_seed);

  LossBreakdown eval(const Eigen::MatrixXd& delta_tokens,
                     Eigen::MatrixXd* grad_out = nullptr) const;

  long rows() const { return x0_.rows(); }
  long cols() const { return x0_.cols(); }

 private:
  const ModelBackend& backend_;
  AttackConfig config_;
  ForegroundMask mask_;
  Eigen::MatrixXd x0_;
  Eigen::MatrixXd z_clean_;
  long t_;
  std::vector<Eigen::MatrixXd> noises_;
};

struct ProfileResult {
  AttentionStats pooled;
  std::vector<std::pair<long, AttentionStats>> per_timestep;
};

// Foreground/background attention statistics of the clean forward pass over
// n_timesteps sampled timesteps. The sampled (t, noise) stream depends only on
// the seed, so runs over different images pair up exactly.
ProfileResult profile_attention(const ModelBackend& backend, const Image& image,
                                const ForegroundMask& mask, long n_timesteps,
                                uint64_t seed);

}  // namespace dea
