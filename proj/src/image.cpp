#include "dea/image.hpp"

#include <algorithm>
#include <cmath>

#include "dea/error.hpp"

namespace dea {

Image make_image(long h, long w, int channels, double fill) {
  Image img;
  img.planes.assign(size_t(channels), Eigen::MatrixXd::Constant(h, w, fill));
  return img;
}

bool same_shape(const Image& a, const Image& b) {
  return a.channels() == b.channels() && a.height() == b.height() &&
         a.width() == b.width();
}

Eigen::MatrixXd luma(const Image& img) {
  if (img.empty()) raise(Errc::shape_mismatch, "empty image");
  if (img.channels() == 1) return img.planes[0];
  if (img.channels() < 3) raise(Errc::shape_mismatch, "expected gray or RGB(A)");
  return 0.299 * img.planes[0] + 0.587 * img.planes[1] + 0.114 * img.planes[2];
}

Image clamp01(Image img) {
  for (auto& p : img.planes)
    p = p.array().max(0.0).min(1.0).matrix();
  return img;
}

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& p : out.planes) {
    p = p.unaryExpr([](double x) {
      double v = std::floor(std::clamp(x, 0.0, 1.0) * 255.0 + 0.5);
      return v / 255.0;
    });
  }
  return out;
}

double max_abs_diff(const Image& a, const Image& b) {
  if (!same_shape(a, b)) raise(Errc::shape_mismatch, "image shapes differ");
  double m = 0.0;
  for (size_t c = 0; c < a.planes.size(); ++c)
    m = std::max(m, (a.planes[c] - b.planes[c]).cwiseAbs().maxCoeff());
  return m;
}

Eigen::MatrixXd image_to_tokens(const Image& img) {
  if (img.empty()) raise(Errc::shape_mismatch, "empty image");
  const long h = img.height(), w = img.width();
  Eigen::MatrixXd t(h * w, 3);
  for (int c = 0; c < 3; ++c) {
    const Eigen::MatrixXd& p = img.planes[img.channels() == 1 ? 0 : size_t(c)];
    for (long r = 0; r < h; ++r)
      for (long q = 0; q < w; ++q)
        t(r * w + q, c) = p(r, q);
  }
  return t;
}

Image tokens_to_image(const Eigen::MatrixXd& tokens, long h, long w) {
  if (tokens.rows() != h * w || tokens.cols() != 3)
    raise(Errc::shape_mismatch, "token matrix does not match image shape");
  Image img = make_image(h, w, 3);
  for (int c = 0; c < 3; ++c)
    for (long r = 0; r < h; ++r)
      for (long q = 0; q < w; ++q)
        img.planes[size_t(c)](r, q) = tokens(r * w + q, c);
  return img;
}

}  // namespace dea
