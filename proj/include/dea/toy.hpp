#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dea/backend.hpp"
#include "dea/scene.hpp"
#include "json.hpp"

namespace dea {

struct ToyConfig {
  long image_side = 32;
  long latent_side = 8;
  long channels = 16;
  long heads = 2;
  long n_views = 4;
  long n_domains = 2;
  long t_max = 100;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  double latent_scale = 2.0;
  uint64_t seed = 0;

  void validate() const;
};

nlohmann::json toy_config_to_json(const ToyConfig& config);
ToyConfig toy_config_from_json(const nlohmann::json& j);

// Desk-scale multi-view diffusion backend. The encoder/decoder pair is a
// fixed, seeded analytic transform: each patch of pixels folds into one
// latent token through an orthonormal frame whose first three channels hold
// the per-RGB patch means and whose remaining channels hold gain-boosted
// within-patch detail. Only the UNet denoiser trains: two residual blocks,
// each with self, multi-view, and cross-domain attention in that order
// followed by a small MLP, conditioned on a sinusoidal timestep embedding,
// learned pose/domain embeddings, and the projected reference latent.
class ToyBackend : public ModelBackend {
 public:
  static constexpr long kMeanChannels = 3;
  static constexpr double kDetailGain = 3.0;

  explicit ToyBackend(const ToyConfig& config);

  BackendInfo info() const override;
  const NoiseSchedule& schedule() const override;
  ad::Tensor encode(const ad::Tensor& image_tokens) const override;
  ad::Tensor decode_latent(const ad::Tensor& latent) const override;
  Eigen::RowVectorXd embed_condition(long pose_index) const override;
  DenoiseOutput denoise_with_capture(const std::vector<ad::Tensor>& z_t, long t,
                                     const Condition& condition) const override;

  const ToyConfig& toy_config() const { return config_; }
  std::vector<ad::Tensor> parameters() const;
  const std::vector<std::pair<std::string, ad::Tensor>>& named_parameters() const {
    return params_;
  }
  std::string weights_fingerprint() const;
  void save_weights(const std::string& path) const;
  static ToyBackend load_weights(const std::string& path);

 private:
  ad::Tensor param(const std::string& name) const;
  ad::Tensor embed_row(const ad::Tensor& table, long index) const;

  ToyConfig config_;
  NoiseSchedule schedule_;
  Eigen::MatrixXd enc_w_;      // patch_dim x channels, gain-weighted frame
  Eigen::MatrixXd dec_w_;      // channels x patch_dim, exact left inverse
  Eigen::MatrixXd pos_embed_;  // d_seq x channels, fixed sinusoidal
  std::vector<std::pair<std::string, ad::Tensor>> params_;
};

// One denoising-objective pass over the dataset per epoch, one Adam step per
// scene. Returns the per-epoch mean loss curve; throws Diverged on non-finite
// loss. epochs = 0 leaves the backend untouched.
std::vector<double> train_toy(ToyBackend& backend,
                              const std::vector<ProceduralScene>& scenes,
                              long epochs, double lr, uint64_t seed);

struct GeneratedView {
  SlotId slot;
  Image image;
};

// Deterministic DDIM loop from seeded noise, conditioned on the encoded input
// image. Returns one decoded image per (view, domain) slot.
std::vector<GeneratedView> generate_views(const ModelBackend& backend,
                                          const Image& image, long n_steps,
                                          uint64_t seed);

}  // namespace dea
