#pragma once

#include <Eigen/Core>
#include <vector>

namespace dea {

// Planar floating-point raster in [0,1]. 1 plane = gray, 3 = RGB, 4 = RGBA.
struct Image {
  std::vector<Eigen::MatrixXd> planes;

  long height() const { return planes.empty() ? 0 : planes[0].rows(); }
  long width() const { return planes.empty() ? 0 : planes[0].cols(); }
  int channels() const { return int(planes.size()); }
  bool has_alpha() const { return planes.size() == 4; }
  bool empty() const { return planes.empty() || height() == 0 || width() == 0; }
};

Image make_image(long h, long w, int channels, double fill = 0.0);

bool same_shape(const Image& a, const Image& b);

// Rec.601 luma for RGB(A); gray images pass through.
Eigen::MatrixXd luma(const Image& img);

Image clamp01(Image img);

// round-half-up to the 8-bit grid, result still in [0,1]
Image quantize8(const Image& img);

double max_abs_diff(const Image& a, const Image& b);

// (H*W) x 3 row-major tokens; gray replicated across channels, alpha dropped
Eigen::MatrixXd image_to_tokens(const Image& img);
Image tokens_to_image(const Eigen::MatrixXd& tokens, long h, long w);

}  // namespace dea
