#include "dea/mask.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "dea/error.hpp"

namespace dea {

namespace {

void check_not_degenerate(const Eigen::MatrixXd& grid) {
  const double total = grid.sum();
  const double n = double(grid.size());
  if (total >= n) raise(Errc::all_foreground, "mask has no background pixels");
  if (total <= 0.0) raise(Errc::all_background, "mask has no foreground pixels");
}

Eigen::Vector3d pixel_rgb(const Image& image, long r, long c) {
  if (image.channels() >= 3)
    return {image.planes[0](r, c), image.planes[1](r, c), image.planes[2](r, c)};
  const double g = image.planes[0](r, c);
  return {g, g, g};
}

}  // namespace

const char* mask_source_name(MaskSource source) {
  switch (source) {
    case MaskSource::alpha_channel: return "alpha_channel";
    case MaskSource::color_threshold: return "color_threshold";
    case MaskSource::provided_file: return "provided_file";
  }
  return "unknown";
}

ForegroundMask mask_from_alpha(const Image& image) {
  if (image.empty()) raise(Errc::shape_mismatch, "empty image");
  if (!image.has_alpha()) raise(Errc::missing_alpha, "image has no alpha plane");
  const Eigen::MatrixXd& alpha = image.planes.back();
  Eigen::MatrixXd grid = (alpha.array() > 0.5).cast<double>().matrix();
  check_not_degenerate(grid);
  return {std::move(grid), MaskSource::alpha_channel};
}

ForegroundMask mask_from_corner_color(const Image& image, double tau) {
  if (image.empty()) raise(Errc::shape_mismatch, "empty image");
  const long h = image.height(), w = image.width();
  const std::array<Eigen::Vector3d, 4> corners = {
      pixel_rgb(image, 0, 0), pixel_rgb(image, 0, w - 1),
      pixel_rgb(image, h - 1, 0), pixel_rgb(image, h - 1, w - 1)};
  int dominant = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    double score = 0.0;
    for (int j = 0; j < 4; ++j) score += (corners[i] - corners[j]).norm();
    if (score < best) {
      best = score;
      dominant = i;
    }
  }
  Eigen::MatrixXd grid(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      grid(r, c) =
          (pixel_rgb(image, r, c) - corners[size_t(dominant)]).norm() <= tau
              ? 0.0
              : 1.0;
  check_not_degenerate(grid);
  return {std::move(grid), MaskSource::color_threshold};
}

ForegroundMask extract_foreground_mask(const Image& image, double tau) {
  if (image.has_alpha()) return mask_from_alpha(image);
  return mask_from_corner_color(image, tau);
}

ForegroundMask mask_from_file_image(const Image& image) {
  if (image.empty()) raise(Errc::shape_mismatch, "empty image");
  const Eigen::MatrixXd gray = image.channels() == 1 ? image.planes[0] : luma(image);
  const double threshold = 128.0 / 255.0;
  Eigen::MatrixXd grid = (gray.array() >= threshold).cast<double>().matrix();
  check_not_degenerate(grid);
  return {std::move(grid), MaskSource::provided_file};
}

Image mask_to_image(const ForegroundMask& mask) {
  Image out;
  out.planes.push_back(mask.grid);
  return out;
}

Eigen::MatrixXd area_downscale(const Eigen::MatrixXd& grid, long side) {
  const long h = grid.rows(), w = grid.cols();
  if (side <= 0 || side > std::min(h, w))
    raise(Errc::upscale_requested, "target side exceeds mask resolution");
  Eigen::MatrixXd out(side, side);
  const double sy = double(h) / double(side);
  const double sx = double(w) / double(side);
  for (long r = 0; r < side; ++r) {
    const double y0 = r * sy, y1 = (r + 1) * sy;
    for (long c = 0; c < side; ++c) {
      const double x0 = c * sx, x1 = (c + 1) * sx;
      double acc = 0.0;
      for (long i = long(std::floor(y0)); i < long(std::ceil(y1)); ++i) {
        const double oy = std::min(y1, double(i + 1)) - std::max(y0, double(i));
        if (oy <= 0.0) continue;
        for (long j = long(std::floor(x0)); j < long(std::ceil(x1)); ++j) {
          const double ox =
              std::min(x1, double(j + 1)) - std::max(x0, double(j));
          if (ox <= 0.0) continue;
          acc += oy * ox * grid(i, j);
        }
      }
      out(r, c) = acc / (sy * sx) >= 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

Eigen::MatrixXd downscale_mask(const ForegroundMask& mask, long d_seq) {
  if (d_seq <= 0) raise(Errc::not_perfect_square, "sequence length must be positive");
  const long side = long(std::llround(std::sqrt(double(d_seq))));
  if (side * side != d_seq)
    raise(Errc::not_perfect_square, "sequence length is not a perfect square");
  return area_downscale(mask.grid, side);
}

Eigen::RowVectorXd flatten_row_major(const Eigen::MatrixXd& grid) {
  Eigen::RowVectorXd flat(grid.size());
  long idx = 0;
  for (long r = 0; r < grid.rows(); ++r)
    for (long c = 0; c < grid.cols(); ++c) flat(idx++) = grid(r, c);
  return flat;
}

AttentionMask build_attention_mask(const ForegroundMask& mask, long d_seq,
                                   AttentionKind kind, long n_views,
                                   long n_domains) {
  if (n_views < 1 || n_domains < 1)
    raise(Errc::config_error, "view and domain counts must be positive");
  const Eigen::RowVectorXd flat = flatten_row_major(downscale_mask(mask, d_seq));
  const long k = tiling_factor(kind, n_views, n_domains);
  Eigen::RowVectorXd row(d_seq * k);
  for (long t = 0; t < k; ++t) row.segment(t * d_seq, d_seq) = flat;
  AttentionMask out;
  out.grid = row.replicate(d_seq, 1);
  out.kind = kind;
  out.k = k;
  out.d_seq = d_seq;
  return out;
}

}  // namespace dea
