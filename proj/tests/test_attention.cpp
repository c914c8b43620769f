#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <random>

#include "dea/attention.hpp"
#include "dea/error.hpp"

namespace {

namespace ad = dea::ad;
using dea::AttentionCapture;
using dea::AttentionKind;
using dea::AttentionMask;
using dea::Errc;
using dea::Error;

Eigen::MatrixXd random_matrix(long r, long c, uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::MatrixXd m(r, c);
  for (long i = 0; i < r; ++i)
    for (long j = 0; j < c; ++j) m(i, j) = dist(gen);
  return m;
}

AttentionCapture single_map_capture(const Eigen::MatrixXd& map, long k = 1,
                                    AttentionKind kind = AttentionKind::self_attention) {
  AttentionCapture cap;
  cap.maps = {ad::Tensor::constant(map)};
  cap.kind = kind;
  cap.layer_id = "test.layer";
  cap.batch = 1;
  cap.heads = 1;
  cap.d_seq = map.rows();
  cap.k = k;
  cap.resolution_rank = 0;
  return cap;
}

AttentionMask column_mask(long d_seq, long k, const Eigen::RowVectorXd& base_row,
                          AttentionKind kind = AttentionKind::self_attention) {
  AttentionMask mask;
  mask.kind = kind;
  mask.k = k;
  mask.d_seq = d_seq;
  Eigen::RowVectorXd tiled(d_seq * k);
  for (long t = 0; t < k; ++t) tiled.segment(t * d_seq, d_seq) = base_row;
  mask.grid = tiled.replicate(d_seq, 1);
  return mask;
}

}  // namespace

TEST_CASE("attention map of zero logits is uniform") {
  ad::Tensor q = ad::Tensor::constant(Eigen::MatrixXd::Zero(2, 3));
  ad::Tensor k = ad::Tensor::constant(Eigen::MatrixXd::Zero(2, 3));
  Eigen::MatrixXd m = dea::attention_map(q, k, 3).value();
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 2);
  for (long r = 0; r < 2; ++r)
    for (long c = 0; c < 2; ++c) CHECK(m(r, c) == doctest::Approx(0.5));
}

TEST_CASE("attention map of orthogonal queries and keys") {
  // rows with q·k = 4 on the diagonal, 0 off it; the 1/sqrt(4) scale leaves
  // logits of exactly 2 and 0
  Eigen::MatrixXd qk = Eigen::MatrixXd::Zero(2, 4);
  qk(0, 0) = 2.0;
  qk(1, 1) = 2.0;
  Eigen::MatrixXd m =
      dea::attention_map(ad::Tensor::constant(qk), ad::Tensor::constant(qk), 4).value();
  const double e2 = std::exp(2.0);
  CHECK(m(0, 0) == doctest::Approx(e2 / (e2 + 1.0)));
  CHECK(m(0, 1) == doctest::Approx(1.0 / (e2 + 1.0)));
  CHECK(m(1, 0) == doctest::Approx(1.0 / (e2 + 1.0)));
  CHECK(m(1, 1) == doctest::Approx(e2 / (e2 + 1.0)));
}

TEST_CASE("attention map rows are stochastic") {
  Eigen::MatrixXd q = random_matrix(4, 8, 1);
  Eigen::MatrixXd k = random_matrix(12, 8, 2);
  Eigen::MatrixXd m =
      dea::attention_map(ad::Tensor::constant(q), ad::Tensor::constant(k), 8).value();
  CHECK(m.cols() == 12);
  for (long r = 0; r < m.rows(); ++r) CHECK(m.row(r).sum() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(m.minCoeff() >= 0.0);
  CHECK(m.maxCoeff() <= 1.0);
}

TEST_CASE("attention map shape checks") {
  ad::Tensor q = ad::Tensor::constant(Eigen::MatrixXd::Zero(2, 3));
  ad::Tensor k = ad::Tensor::constant(Eigen::MatrixXd::Zero(2, 4));
  CHECK_THROWS_AS(dea::attention_map(q, k, 3), Error);
}

TEST_CASE("mean_scores hand oracle") {
  Eigen::MatrixXd map(2, 2);
  map << 0.8, 0.2, 0.6, 0.4;
  Eigen::RowVectorXd base(2);
  base << 1, 0;
  dea::MeanScores s = dea::mean_scores(single_map_capture(map), column_mask(2, 1, base));
  CHECK(s.t_f == doctest::Approx(0.7));
  CHECK(s.t_b == doctest::Approx(0.3));
}

TEST_CASE("mean_scores of a uniform map") {
  long d = 4, k = 2;
  Eigen::MatrixXd map = Eigen::MatrixXd::Constant(d, d * k, 1.0 / double(d * k));
  Eigen::RowVectorXd base(d);
  base << 1, 0, 1, 0;
  dea::MeanScores s =
      dea::mean_scores(single_map_capture(map, k), column_mask(d, k, base));
  CHECK(s.t_f == doctest::Approx(1.0 / double(d * k)));
  CHECK(s.t_b == doctest::Approx(1.0 / double(d * k)));
}

TEST_CASE("mean_scores averages batch and heads before masking") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1.0, 0.0, 1.0, 0.0;
  b << 0.0, 1.0, 0.0, 1.0;
  AttentionCapture cap;
  cap.maps = {ad::Tensor::constant(a), ad::Tensor::constant(b)};
  cap.kind = AttentionKind::self_attention;
  cap.layer_id = "avg";
  cap.batch = 1;
  cap.heads = 2;
  cap.d_seq = 2;
  cap.k = 1;
  Eigen::RowVectorXd base(2);
  base << 1, 0;
  dea::MeanScores s = dea::mean_scores(cap, column_mask(2, 1, base));
  CHECK(s.t_f == doctest::Approx(0.5));
  CHECK(s.t_b == doctest::Approx(0.5));
}

TEST_CASE("mean_scores degenerate masks") {
  Eigen::MatrixXd map = Eigen::MatrixXd::Constant(2, 2, 0.5);
  Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(2);
  Eigen::RowVectorXd zeros = Eigen::RowVectorXd::Zero(2);
  try {
    dea::mean_scores(single_map_capture(map), column_mask(2, 1, ones));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_background);
  }
  try {
    dea::mean_scores(single_map_capture(map), column_mask(2, 1, zeros));
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_foreground);
  }
}

TEST_CASE("complementarity identity") {
  std::mt19937 gen(5);
  for (int trial = 0; trial < 8; ++trial) {
    long d = 4, k = (trial % 2) + 1;
    Eigen::MatrixXd q = random_matrix(d, 6, 100 + trial);
    Eigen::MatrixXd kk = random_matrix(d * k, 6, 200 + trial);
    Eigen::MatrixXd map =
        dea::attention_map(ad::Tensor::constant(q), ad::Tensor::constant(kk), 6).value();
    Eigen::RowVectorXd base(d);
    std::uniform_int_distribution<int> bit(0, 1);
    long fg = 0;
    for (long j = 0; j < d; ++j) {
      base(j) = bit(gen);
      fg += long(base(j));
    }
    if (fg == 0 || fg == d) continue;
    dea::MeanScores s =
        dea::mean_scores(single_map_capture(map, k), column_mask(d, k, base));
    double w_f = double(fg) / double(d);
    double row_mean = map.mean();
    CHECK(w_f * s.t_f + (1.0 - w_f) * s.t_b == doctest::Approx(row_mean).epsilon(1e-9));
    CHECK(w_f * s.t_f + (1.0 - w_f) * s.t_b ==
          doctest::Approx(1.0 / double(d * k)).epsilon(1e-9));
  }
}

TEST_CASE("permutation equivariance of masked scores") {
  long d = 4, c = 4;
  Eigen::MatrixXd q = random_matrix(d, c, 31);
  Eigen::MatrixXd k = random_matrix(d, c, 32);
  Eigen::RowVectorXd base(d);
  base << 1, 0, 1, 0;
  Eigen::MatrixXd map =
      dea::attention_map(ad::Tensor::constant(q), ad::Tensor::constant(k), c).value();
  dea::MeanScores s0 = dea::mean_scores(single_map_capture(map), column_mask(d, 1, base));

  std::vector<long> perm = {2, 0, 3, 1};
  Eigen::MatrixXd kp(d, c);
  Eigen::RowVectorXd basep(d);
  for (long j = 0; j < d; ++j) {
    kp.row(j) = k.row(perm[size_t(j)]);
    basep(j) = base(perm[size_t(j)]);
  }
  Eigen::MatrixXd mapp =
      dea::attention_map(ad::Tensor::constant(q), ad::Tensor::constant(kp), c).value();
  dea::MeanScores s1 = dea::mean_scores(single_map_capture(mapp), column_mask(d, 1, basep));
  CHECK(s0.t_f == doctest::Approx(s1.t_f).epsilon(1e-12));
  CHECK(s0.t_b == doctest::Approx(s1.t_b).epsilon(1e-12));
}

TEST_CASE("aggregate averages lowest-resolution layers") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0.8, 0.2, 0.6, 0.4;  // t_f = 0.7 on mask [1,0]
  b << 0.6, 0.4, 0.2, 0.8;  // t_f = 0.4
  AttentionCapture ca = single_map_capture(a);
  AttentionCapture cb = single_map_capture(b);
  cb.layer_id = "test.layer2";
  Eigen::RowVectorXd base(2);
  base << 1, 0;
  std::vector<AttentionMask> masks = {column_mask(2, 1, base), column_mask(2, 1, base)};

  dea::AttentionStats single = dea::aggregate_lowest_dim({ca}, {masks[0]});
  CHECK(single.t_f_mean == doctest::Approx(0.7));
  CHECK(single.per_layer.size() == 1);

  dea::AttentionStats both = dea::aggregate_lowest_dim({ca, cb}, masks);
  CHECK(both.t_f_mean == doctest::Approx(0.55));
  CHECK(both.t_b_mean == doctest::Approx(0.45));
  CHECK(both.per_layer.size() == 2);
}

TEST_CASE("aggregate resolution filtering") {
  Eigen::MatrixXd low(2, 2);
  low << 0.8, 0.2, 0.6, 0.4;
  Eigen::MatrixXd high = Eigen::MatrixXd::Constant(4, 4, 0.25);
  AttentionCapture clow = single_map_capture(low);
  AttentionCapture chigh = single_map_capture(high);
  chigh.layer_id = "test.high";
  chigh.resolution_rank = 1;
  Eigen::RowVectorXd base2(2), base4(4);
  base2 << 1, 0;
  base4 << 1, 0, 1, 0;
  std::vector<AttentionMask> masks = {column_mask(2, 1, base2), column_mask(4, 1, base4)};

  dea::AttentionStats lowest = dea::aggregate_lowest_dim({clow, chigh}, masks);
  CHECK(lowest.per_layer.size() == 1);
  CHECK(lowest.t_f_mean == doctest::Approx(0.7));

  dea::AttentionStats all = dea::aggregate_all({clow, chigh}, masks);
  CHECK(all.per_layer.size() == 2);
  CHECK(all.t_f_mean == doctest::Approx((0.7 + 0.25) / 2.0));
}

TEST_CASE("aggregate with nothing to score") {
  try {
    dea::aggregate_lowest_dim({}, {});
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::no_captures);
  }
}

TEST_CASE("stats serialize to text") {
  Eigen::MatrixXd a(2, 2);
  a << 0.8, 0.2, 0.6, 0.4;
  Eigen::RowVectorXd base(2);
  base << 1, 0;
  dea::AttentionStats stats =
      dea::aggregate_lowest_dim({single_map_capture(a)}, {column_mask(2, 1, base)});
  std::string text = dea::stats_to_text(stats);
  CHECK(text.find("test.layer self 2 ") != std::string::npos);
  CHECK(text.find("mean - - ") != std::string::npos);
  char rendered[64];
  std::snprintf(rendered, sizeof(rendered), "%.17g", stats.t_f_mean);
  CHECK(text.find(rendered) != std::string::npos);
}
