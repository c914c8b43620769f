#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dea/ad.hpp"
#include "dea/attention.hpp"
#include "dea/image.hpp"

namespace dea {

struct SlotId {
  long view = 0;
  long domain = 0;
};

// Conditioning shared by all batch slots: the encoded reference latent (kept
// on the tape so gradients reach the input image) plus per-slot identities.
struct Condition {
  ad::Tensor reference;
  std::vector<SlotId> slots;
};

struct DenoiseOutput {
  std::vector<ad::Tensor> eps;
  std::vector<AttentionCapture> captures;
};

struct NoiseSchedule {
  std::string name;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha_bar;

  long t_max() const { return beta.size(); }
  // t in [0, t_max]; alpha_bar_at(0) = 1 (no noise)
  double alpha_bar_at(long t) const;

  static NoiseSchedule linear(long t_max, double beta_start, double beta_end);
};

struct BackendInfo {
  std::string id;
  long n_views = 1;
  long n_domains = 1;
  long image_side = 0;
  long latent_side = 0;
  long latent_channels = 0;
  long heads = 1;
  long t_max = 0;
  std::string schedule_name;
  std::string flatten_order = "row_major";

  long d_seq() const { return latent_side * latent_side; }
  long batch() const { return n_views * n_domains; }
};

// Minimal multi-view diffusion model contract the attack runs against.
// Implementations must be deterministic given their weights and keep every
// operation differentiable with respect to latent/image inputs.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  virtual BackendInfo info() const = 0;
  virtual const NoiseSchedule& schedule() const = 0;

  // image tokens (H*W, 3) in [0,1] -> latent tokens (D, channels)
  virtual ad::Tensor encode(const ad::Tensor& image_tokens) const = 0;

  // latent tokens -> image tokens (H*W, 3), differentiable mirror of encode
  virtual ad::Tensor decode_latent(const ad::Tensor& latent) const = 0;

  virtual Image decode(const Eigen::MatrixXd& latent) const;

  virtual Eigen::RowVectorXd embed_condition(long pose_index) const = 0;

  // One denoising forward pass over the whole working batch. The capture list
  // covers every attention layer in declared order with correct kind tags.
  virtual DenoiseOutput denoise_with_capture(const std::vector<ad::Tensor>& z_t,
                                             long t,
                                             const Condition& condition) const = 0;

  Eigen::MatrixXd encode_image(const Image& image) const;
};

// Slot identities in working-batch order: the view index cycles fastest,
// b = domain * n_views + view.
std::vector<SlotId> batch_slots(const BackendInfo& info);

struct BatchedLatent {
  std::vector<ad::Tensor> slots;
  std::vector<SlotId> ids;
};

// Replicates one encoded latent across the backend's working batch.
BatchedLatent expand_batch(const ad::Tensor& z, const BackendInfo& info);

// q(z_t | z): sqrt(alpha_bar_t) z + sqrt(1 - alpha_bar_t) noise
ad::Tensor forward_noise(const ad::Tensor& z, const NoiseSchedule& schedule,
                         long t, const Eigen::MatrixXd& noise);

}  // namespace dea
