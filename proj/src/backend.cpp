#include "dea/backend.hpp"

#include <cmath>

#include "dea/error.hpp"

namespace dea {

double NoiseSchedule::alpha_bar_at(long t) const {
  if (t == 0) return 1.0;
  if (t < 1 || t > t_max())
    raise(Errc::config_error, "timestep outside [0, t_max]");
  return alpha_bar(t - 1);
}

NoiseSchedule NoiseSchedule::linear(long t_max, double beta_start, double beta_end) {
  if (t_max < 1) raise(Errc::config_error, "t_max must be positive");
  NoiseSchedule s;
  s.name = "linear";
  s.beta.resize(t_max);
  s.alpha_bar.resize(t_max);
  double prod = 1.0;
  for (long i = 0; i < t_max; ++i) {
    const double frac = t_max == 1 ? 0.0 : double(i) / double(t_max - 1);
    s.beta(i) = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.beta(i);
    s.alpha_bar(i) = prod;
  }
  return s;
}

Image ModelBackend::decode(const Eigen::MatrixXd& latent) const {
  const ad::Tensor tokens = decode_latent(ad::Tensor::constant(latent));
  const long side = info().image_side;
  return tokens_to_image(tokens.value(), side, side);
}

Eigen::MatrixXd ModelBackend::encode_image(const Image& image) const {
  return encode(ad::Tensor::constant(image_to_tokens(image))).value();
}

std::vector<SlotId> batch_slots(const BackendInfo& info) {
  std::vector<SlotId> slots;
  slots.reserve(size_t(info.batch()));
  for (long d = 0; d < info.n_domains; ++d)
    for (long v = 0; v < info.n_views; ++v) slots.push_back({v, d});
  return slots;
}

BatchedLatent expand_batch(const ad::Tensor& z, const BackendInfo& info) {
  BatchedLatent out;
  out.ids = batch_slots(info);
  out.slots.assign(out.ids.size(), z);
  return out;
}

ad::Tensor forward_noise(const ad::Tensor& z, const NoiseSchedule& schedule,
                         long t, const Eigen::MatrixXd& noise) {
  if (z.rows() != noise.rows() || z.cols() != noise.cols())
    raise(Errc::shape_mismatch, "noise shape differs from latent shape");
  const double ab = schedule.alpha_bar_at(t);
  return ad::add(ad::scale(z, std::sqrt(ab)),
                 ad::Tensor::constant(std::sqrt(1.0 - ab) * noise));
}

}  // namespace dea
