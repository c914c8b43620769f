#include "dea/attention.hpp"

#include <cmath>
#include <cstdio>

#include "dea/error.hpp"

namespace dea {

ad::Tensor attention_map(const ad::Tensor& q, const ad::Tensor& k, long head_dim) {
  if (head_dim <= 0) raise(Errc::shape_mismatch, "head dimension must be positive");
  if (q.cols() != head_dim || k.cols() != head_dim)
    raise(Errc::shape_mismatch, "query/key feature size differs from head dimension");
  ad::Tensor logits = ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(double(head_dim)));
  return ad::softmax_rows(logits);
}

void check_capture(const AttentionCapture& capture) {
  if (capture.maps.empty() ||
      long(capture.maps.size()) != capture.batch * capture.heads)
    raise(Errc::shape_mismatch, "capture map count differs from batch*heads");
  for (const auto& m : capture.maps)
    if (m.rows() != capture.d_seq || m.cols() != capture.d_seq * capture.k)
      raise(Errc::shape_mismatch, "capture map shape differs from (D, D*k)");
}

void check_mask_matches(const AttentionCapture& capture, const AttentionMask& mask) {
  if (mask.grid.rows() != capture.d_seq ||
      mask.grid.cols() != capture.d_seq * capture.k)
    raise(Errc::shape_mismatch, "attention mask shape differs from capture shape");
}

ad::Tensor mean_map(const AttentionCapture& capture) {
  check_capture(capture);
  ad::Tensor acc = capture.maps[0];
  for (size_t i = 1; i < capture.maps.size(); ++i)
    acc = ad::add(acc, capture.maps[i]);
  return ad::scale(acc, 1.0 / double(capture.maps.size()));
}

MeanScores mean_scores(const AttentionCapture& capture, const AttentionMask& mask) {
  check_capture(capture);
  check_mask_matches(capture, mask);
  Eigen::MatrixXd mean = capture.maps[0].value();
  for (size_t i = 1; i < capture.maps.size(); ++i) mean += capture.maps[i].value();
  mean /= double(capture.maps.size());
  const double fg_count = mask.grid.sum();
  const double bg_count = double(mask.grid.size()) - fg_count;
  if (fg_count <= 0.0) raise(Errc::empty_foreground, "mask selects no foreground keys");
  if (bg_count <= 0.0) raise(Errc::empty_background, "mask selects no background keys");
  const double fg_sum = mean.cwiseProduct(mask.grid).sum();
  return {fg_sum / fg_count, (mean.sum() - fg_sum) / bg_count};
}

namespace {

AttentionStats aggregate(const std::vector<AttentionCapture>& captures,
                         const std::vector<AttentionMask>& masks,
                         bool lowest_only) {
  if (captures.empty()) raise(Errc::no_captures, "no attention captures");
  if (captures.size() != masks.size())
    raise(Errc::shape_mismatch, "capture and mask counts differ");
  AttentionStats stats;
  for (size_t i = 0; i < captures.size(); ++i) {
    if (lowest_only && captures[i].resolution_rank != 0) continue;
    const MeanScores s = mean_scores(captures[i], masks[i]);
    stats.per_layer.push_back({captures[i].layer_id, captures[i].kind,
                               captures[i].d_seq, s.t_f, s.t_b});
  }
  if (stats.per_layer.empty()) raise(Errc::no_captures, "no captures after filtering");
  for (const auto& row : stats.per_layer) {
    stats.t_f_mean += row.t_f_mean;
    stats.t_b_mean += row.t_b_mean;
  }
  stats.t_f_mean /= double(stats.per_layer.size());
  stats.t_b_mean /= double(stats.per_layer.size());
  return stats;
}

}  // namespace

AttentionStats aggregate_lowest_dim(const std::vector<AttentionCapture>& captures,
                                    const std::vector<AttentionMask>& masks) {
  return aggregate(captures, masks, true);
}

AttentionStats aggregate_all(const std::vector<AttentionCapture>& captures,
                             const std::vector<AttentionMask>& masks) {
  return aggregate(captures, masks, false);
}

std::string stats_to_text(const AttentionStats& stats) {
  std::string out;
  char line[256];
  for (const auto& row : stats.per_layer) {
    std::snprintf(line, sizeof(line), "%s %s %ld %.17g %.17g\n",
                  row.layer_id.c_str(), attention_kind_name(row.kind), row.d_seq,
                  row.t_f_mean, row.t_b_mean);
    out += line;
  }
  std::snprintf(line, sizeof(line), "mean - - %.17g %.17g\n", stats.t_f_mean,
                stats.t_b_mean);
  out += line;
  return out;
}

}  // namespace dea
