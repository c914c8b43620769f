#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dea/ad.hpp"
#include "dea/attention_kind.hpp"
#include "dea/mask.hpp"

namespace dea {

// One attention layer's maps for one forward pass. Maps are stored slot-major,
// head-minor: maps[b * heads + h] is the (d_seq, d_seq * k) map of batch slot b
// and head h. Maps stay on the autodiff tape so losses can differentiate
// through them.
struct AttentionCapture {
  std::vector<ad::Tensor> maps;
  AttentionKind kind = AttentionKind::self_attention;
  std::string layer_id;
  long batch = 0;
  long heads = 0;
  long d_seq = 0;
  long k = 1;
  long resolution_rank = 0;
};

// Softmax(Q K^T / sqrt(d)) over the key axis for a single batch/head slot.
// q is (d_seq, d), k is (d_seq * tile, d).
ad::Tensor attention_map(const ad::Tensor& q, const ad::Tensor& k, long head_dim);

// Map averaged over batch slots and heads, still differentiable.
ad::Tensor mean_map(const AttentionCapture& capture);

void check_capture(const AttentionCapture& capture);
void check_mask_matches(const AttentionCapture& capture, const AttentionMask& mask);

struct MeanScores {
  double t_f = 0.0;
  double t_b = 0.0;
};

// Masked means of the batch/head-averaged map: T_f over foreground columns,
// T_b over background columns. Throws EmptyForeground/EmptyBackground when a
// denominator vanishes.
MeanScores mean_scores(const AttentionCapture& capture, const AttentionMask& mask);

struct LayerScore {
  std::string layer_id;
  AttentionKind kind = AttentionKind::self_attention;
  long d_seq = 0;
  double t_f_mean = 0.0;
  double t_b_mean = 0.0;
};

struct AttentionStats {
  double t_f_mean = 0.0;
  double t_b_mean = 0.0;
  std::vector<LayerScore> per_layer;
};

// Restricts to captures with resolution_rank == 0, scores each against its
// mask, and averages across them. Throws NoCaptures on empty input.
AttentionStats aggregate_lowest_dim(const std::vector<AttentionCapture>& captures,
                                    const std::vector<AttentionMask>& masks);

// Same aggregation without the resolution filter.
AttentionStats aggregate_all(const std::vector<AttentionCapture>& captures,
                             const std::vector<AttentionMask>& masks);

// Plain-text rows (layer_id, kind, D, t_f_mean, t_b_mean), one per layer.
std::string stats_to_text(const AttentionStats& stats);

}  // namespace dea
