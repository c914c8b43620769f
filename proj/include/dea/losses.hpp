#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dea/ad.hpp"
#include "dea/attention.hpp"
#include "dea/mask.hpp"

namespace dea {

struct LossBreakdown {
  double l_fe = 0.0;
  double l_ae = 0.0;
  double l_de = 0.0;
  double alpha = 1.0;
  long n_maps = 0;
};

// -mean((z_adv - z_clean)^2); the clean latent is a constant.
ad::Tensor feature_erasure_loss(const ad::Tensor& z_adv,
                                const Eigen::MatrixXd& z_clean);

// Mean over captures of T_f = sum_ij mean_map_ij * mask_ij (unnormalized
// foreground attention mass). One mask per capture.
ad::Tensor attention_erasure_loss(const std::vector<AttentionCapture>& captures,
                                  const std::vector<AttentionMask>& masks,
                                  long* n_maps_out = nullptr);

// l_de = l_ae + alpha * l_fe on the tape.
ad::Tensor dual_loss(const ad::Tensor& l_ae, const ad::Tensor& l_fe, double alpha);

LossBreakdown dual_breakdown(double l_ae, double l_fe, double alpha, long n_maps);

double feature_erasure_loss_value(const Eigen::MatrixXd& z_adv,
                                  const Eigen::MatrixXd& z_clean);

}  // namespace dea
