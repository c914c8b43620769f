#include "dea/losses.hpp"

#include "dea/error.hpp"

namespace dea {

ad::Tensor feature_erasure_loss(const ad::Tensor& z_adv,
                                const Eigen::MatrixXd& z_clean) {
  if (z_adv.rows() != z_clean.rows() || z_adv.cols() != z_clean.cols())
    raise(Errc::shape_mismatch, "latent shapes differ");
  ad::Tensor diff = ad::sub(z_adv, ad::Tensor::constant(z_clean));
  return ad::neg(ad::mean(ad::square(diff)));
}

ad::Tensor attention_erasure_loss(const std::vector<AttentionCapture>& captures,
                                  const std::vector<AttentionMask>& masks,
                                  long* n_maps_out) {
  if (captures.empty()) raise(Errc::no_captures, "no attention captures");
  if (captures.size() != masks.size())
    raise(Errc::shape_mismatch, "capture and mask counts differ");
  ad::Tensor acc;
  long n_maps = 0;
  for (size_t i = 0; i < captures.size(); ++i) {
    check_capture(captures[i]);
    check_mask_matches(captures[i], masks[i]);
    ad::Tensor t_f = ad::sum(ad::hadamard_const(mean_map(captures[i]), masks[i].grid));
    acc = acc.defined() ? ad::add(acc, t_f) : t_f;
    ++n_maps;
  }
  if (n_maps_out) *n_maps_out = n_maps;
  return ad::scale(acc, 1.0 / double(n_maps));
}

ad::Tensor dual_loss(const ad::Tensor& l_ae, const ad::Tensor& l_fe, double alpha) {
  return ad::add(l_ae, ad::scale(l_fe, alpha));
}

LossBreakdown dual_breakdown(double l_ae, double l_fe, double alpha, long n_maps) {
  LossBreakdown out;
  out.l_ae = l_ae;
  out.l_fe = l_fe;
  out.alpha = alpha;
  out.l_de = l_ae + alpha * l_fe;
  out.n_maps = n_maps;
  return out;
}

double feature_erasure_loss_value(const Eigen::MatrixXd& z_adv,
                                  const Eigen::MatrixXd& z_clean) {
  if (z_adv.rows() != z_clean.rows() || z_adv.cols() != z_clean.cols())
    raise(Errc::shape_mismatch, "latent shapes differ");
  return -(z_adv - z_clean).array().square().mean();
}

}  // namespace dea
