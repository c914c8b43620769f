#include "doctest.h"

#include <random>

#include "dea/attention_kind.hpp"
#include "dea/error.hpp"
#include "dea/mask.hpp"

namespace {

using dea::AttentionKind;
using dea::Errc;
using dea::Error;
using dea::ForegroundMask;
using dea::Image;
using dea::MaskSource;

Image white_rgb(long side) { return dea::make_image(side, side, 3, 1.0); }

void paint(Image& img, long r, long c, double red, double green, double blue) {
  img.planes[0](r, c) = red;
  img.planes[1](r, c) = green;
  img.planes[2](r, c) = blue;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  REQUIRE(false);
  return Errc::io_error;
}

ForegroundMask grid_mask(const Eigen::MatrixXd& grid) {
  return ForegroundMask{grid, MaskSource::provided_file};
}

}  // namespace

TEST_CASE("alpha policy thresholds the alpha plane") {
  Image img = dea::make_image(2, 2, 4, 0.3);
  img.planes[3] << 1.0, 0.0, 0.0, 1.0;
  ForegroundMask m = dea::mask_from_alpha(img);
  CHECK(m.source == MaskSource::alpha_channel);
  CHECK(m.grid(0, 0) == 1.0);
  CHECK(m.grid(0, 1) == 0.0);
  CHECK(m.grid(1, 0) == 0.0);
  CHECK(m.grid(1, 1) == 1.0);

  Image soft = dea::make_image(2, 2, 4, 0.0);
  soft.planes[3] << 0.49, 0.51, 0.5, 0.9;
  ForegroundMask ms = dea::mask_from_alpha(soft);
  CHECK(ms.grid(0, 0) == 0.0);
  CHECK(ms.grid(0, 1) == 1.0);
  CHECK(ms.grid(1, 0) == 0.0);  // strictly greater than 0.5
}

TEST_CASE("alpha policy requires an alpha plane") {
  CHECK(code_of([] { dea::mask_from_alpha(white_rgb(2)); }) == Errc::missing_alpha);
}

TEST_CASE("color policy on a uniform image is degenerate") {
  CHECK(code_of([] { dea::mask_from_corner_color(white_rgb(4), 0.1); }) ==
        Errc::all_background);
}

TEST_CASE("color policy marks a centered red block") {
  Image img = white_rgb(4);
  for (long r = 1; r <= 2; ++r)
    for (long c = 1; c <= 2; ++c) paint(img, r, c, 1.0, 0.0, 0.0);
  ForegroundMask m = dea::mask_from_corner_color(img, 0.1);
  CHECK(m.source == MaskSource::color_threshold);
  CHECK(m.foreground_count() == 4);
  for (long r = 0; r < 4; ++r)
    for (long c = 0; c < 4; ++c) {
      bool red = r >= 1 && r <= 2 && c >= 1 && c <= 2;
      CHECK(m.grid(r, c) == (red ? 1.0 : 0.0));
    }
}

TEST_CASE("corner tie resolves to the top-left corner") {
  Image img = dea::make_image(2, 4, 3, 0.0);
  for (long c = 0; c < 4; ++c) {
    bool left = c < 2;
    for (long r = 0; r < 2; ++r)
      paint(img, r, c, left ? 1.0 : 0.0, 0.0, left ? 0.0 : 1.0);
  }
  // red and blue corner pairs tie; top-left (red) wins, so blue is foreground
  ForegroundMask m = dea::mask_from_corner_color(img, 0.1);
  CHECK(m.grid(0, 0) == 0.0);
  CHECK(m.grid(0, 3) == 1.0);
  CHECK(m.foreground_count() == 4);
}

TEST_CASE("extract dispatches on the alpha plane") {
  Image rgba = dea::make_image(3, 3, 4, 0.5);
  rgba.planes[3].setZero();
  rgba.planes[3](1, 1) = 1.0;
  ForegroundMask m = dea::extract_foreground_mask(rgba);
  CHECK(m.source == MaskSource::alpha_channel);
  CHECK(m.foreground_count() == 1);

  Image rgb = white_rgb(4);
  paint(rgb, 2, 2, 0.1, 0.9, 0.1);
  CHECK(dea::extract_foreground_mask(rgb).source == MaskSource::color_threshold);
}

TEST_CASE("file masks threshold at 128 of 255") {
  Image gray = dea::make_image(1, 3, 1);
  gray.planes[0] << 127.0 / 255.0, 128.0 / 255.0, 1.0;
  ForegroundMask m = dea::mask_from_file_image(gray);
  CHECK(m.grid(0, 0) == 0.0);
  CHECK(m.grid(0, 1) == 1.0);
  CHECK(m.grid(0, 2) == 1.0);
}

TEST_CASE("mask image round trip") {
  Eigen::MatrixXd grid(2, 3);
  grid << 1, 0, 1, 0, 0, 1;
  Image img = dea::mask_to_image(grid_mask(grid));
  CHECK(img.channels() == 1);
  ForegroundMask back = dea::mask_from_file_image(img);
  CHECK(back.grid == grid);
}

TEST_CASE("downscale oracles") {
  ForegroundMask ones = grid_mask(Eigen::MatrixXd::Ones(4, 4));
  CHECK(dea::downscale_mask(ones, 4) == Eigen::MatrixXd::Ones(2, 2));

  Eigen::MatrixXd half = Eigen::MatrixXd::Zero(4, 4);
  half.leftCols(2).setOnes();
  Eigen::MatrixXd expect(2, 2);
  expect << 1, 0, 1, 0;
  CHECK(dea::downscale_mask(grid_mask(half), 4) == expect);

  Eigen::MatrixXd small(2, 2);
  small << 1, 0, 0, 0;
  CHECK(dea::downscale_mask(grid_mask(small), 4) == small);
}

TEST_CASE("downscale ties round to foreground") {
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, 1;
  Eigen::MatrixXd out = dea::downscale_mask(grid_mask(m), 1);
  CHECK(out(0, 0) == 1.0);
}

TEST_CASE("downscale handles non-divisible sizes by area overlap") {
  // 3x3 with a 2x2 foreground block in the top-left; 2x2 output cells cover
  // 1.5-pixel spans, so the top-left cell holds 4/2.25 > 0.5 foreground
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m.topLeftCorner(2, 2).setOnes();
  Eigen::MatrixXd out = dea::downscale_mask(grid_mask(m), 4);
  CHECK(out(0, 0) == 1.0);
  CHECK(out(1, 1) == 0.0);
}

TEST_CASE("downscale rejects bad targets") {
  ForegroundMask m = grid_mask(Eigen::MatrixXd::Ones(4, 4));
  CHECK(code_of([&] { dea::downscale_mask(m, 8); }) == Errc::not_perfect_square);
  ForegroundMask tiny = grid_mask(Eigen::MatrixXd::Ones(2, 2));
  CHECK(code_of([&] { dea::downscale_mask(tiny, 16); }) == Errc::upscale_requested);
}

TEST_CASE("attention mask oracles") {
  ForegroundMask ones = grid_mask(Eigen::MatrixXd::Ones(2, 2));
  dea::AttentionMask self = dea::build_attention_mask(ones, 4, AttentionKind::self_attention, 1, 1);
  CHECK(self.grid == Eigen::MatrixXd::Ones(4, 4));
  CHECK(self.k == 1);

  Eigen::MatrixXd corner(2, 2);
  corner << 1, 0, 0, 0;
  dea::AttentionMask sm =
      dea::build_attention_mask(grid_mask(corner), 4, AttentionKind::self_attention, 1, 1);
  Eigen::RowVectorXd row(4);
  row << 1, 0, 0, 0;
  for (long r = 0; r < 4; ++r) CHECK(sm.grid.row(r) == row);

  dea::AttentionMask mv =
      dea::build_attention_mask(grid_mask(corner), 4, AttentionKind::multi_view, 2, 1);
  CHECK(mv.grid.rows() == 4);
  CHECK(mv.grid.cols() == 8);
  Eigen::RowVectorXd tiled(8);
  tiled << 1, 0, 0, 0, 1, 0, 0, 0;
  for (long r = 0; r < 4; ++r) CHECK(mv.grid.row(r) == tiled);

  dea::AttentionMask cd =
      dea::build_attention_mask(grid_mask(corner), 4, AttentionKind::cross_domain, 2, 3);
  CHECK(cd.grid.cols() == 12);
  CHECK(cd.k == 3);
}

TEST_CASE("attention mask structural properties") {
  std::mt19937 gen(7);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd g(6, 6);
    bool any0 = false, any1 = false;
    for (long r = 0; r < 6; ++r)
      for (long c = 0; c < 6; ++c) {
        g(r, c) = bit(gen);
        (g(r, c) > 0.5 ? any1 : any0) = true;
      }
    if (!any0 || !any1) continue;
    for (AttentionKind kind : {AttentionKind::self_attention, AttentionKind::multi_view,
                               AttentionKind::cross_domain}) {
      dea::AttentionMask am = dea::build_attention_mask(grid_mask(g), 9, kind, 4, 2);
      long k = dea::tiling_factor(kind, 4, 2);
      CHECK(am.grid.rows() == 9);
      CHECK(am.grid.cols() == 9 * k);
      for (long r = 1; r < am.grid.rows(); ++r) CHECK(am.grid.row(r) == am.grid.row(0));
      for (long c = 0; c < am.grid.cols(); ++c)
        CHECK(am.grid.col(c).sum() == 9.0 * am.grid(0, c % 9));
    }
  }
}

TEST_CASE("full-foreground self mask is the identity for products") {
  ForegroundMask ones = grid_mask(Eigen::MatrixXd::Ones(4, 4));
  dea::AttentionMask am = dea::build_attention_mask(ones, 4, AttentionKind::self_attention, 1, 1);
  std::mt19937 gen(9);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd m(4, 4);
  for (long r = 0; r < 4; ++r) {
    for (long c = 0; c < 4; ++c) m(r, c) = dist(gen);
    m.row(r) /= m.row(r).sum();
  }
  CHECK((am.grid.cwiseProduct(m) - m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("degenerate masks are rejected") {
  Image all_fg = dea::make_image(2, 2, 4, 0.2);
  all_fg.planes[3].setOnes();
  CHECK(code_of([&] { dea::mask_from_alpha(all_fg); }) == Errc::all_foreground);

  Image all_bg = dea::make_image(2, 2, 4, 0.2);
  all_bg.planes[3].setZero();
  CHECK(code_of([&] { dea::mask_from_alpha(all_bg); }) == Errc::all_background);
}
