#include "dea/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "dea/error.hpp"

namespace dea {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

Eigen::MatrixXd to_gray(const Image& img) {
  if (img.empty()) raise(Errc::shape_mismatch, "empty image");
  return img.channels() == 1 ? img.planes[0] : luma(img);
}

Eigen::VectorXd gaussian_kernel() {
  Eigen::VectorXd k(2 * kRadius + 1);
  for (int i = 0; i <= 2 * kRadius; ++i) {
    const double d = double(i - kRadius);
    k(i) = std::exp(-d * d / (2.0 * kSigma * kSigma));
  }
  return k / k.sum();
}

// separable valid-mode filtering; output shrinks by 2*kRadius per axis
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& img, const Eigen::VectorXd& k) {
  const long h = img.rows(), w = img.cols(), n = k.size();
  Eigen::MatrixXd horiz(h, w - n + 1);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c + n <= w; ++c)
      horiz(r, c) = img.row(r).segment(c, n).dot(k);
  Eigen::MatrixXd out(h - n + 1, w - n + 1);
  for (long c = 0; c < horiz.cols(); ++c)
    for (long r = 0; r + n <= h; ++r)
      out(r, c) = horiz.col(c).segment(r, n).dot(k);
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  const Eigen::MatrixXd ga = to_gray(a);
  const Eigen::MatrixXd gb = to_gray(b);
  if (ga.rows() != gb.rows() || ga.cols() != gb.cols())
    raise(Errc::shape_mismatch, "ssim inputs differ in size");
  if (ga.rows() < 2 * kRadius + 1 || ga.cols() < 2 * kRadius + 1)
    raise(Errc::too_small, "ssim input smaller than the 11x11 window");
  const Eigen::VectorXd k = gaussian_kernel();
  const Eigen::MatrixXd mu_a = filter_valid(ga, k);
  const Eigen::MatrixXd mu_b = filter_valid(gb, k);
  const Eigen::MatrixXd var_a =
      filter_valid(ga.cwiseProduct(ga), k) - mu_a.cwiseProduct(mu_a);
  const Eigen::MatrixXd var_b =
      filter_valid(gb.cwiseProduct(gb), k) - mu_b.cwiseProduct(mu_b);
  const Eigen::MatrixXd cov =
      filter_valid(ga.cwiseProduct(gb), k) - mu_a.cwiseProduct(mu_b);
  const Eigen::ArrayXXd num = (2.0 * mu_a.cwiseProduct(mu_b).array() + kC1) *
                              (2.0 * cov.array() + kC2);
  const Eigen::ArrayXXd den =
      (mu_a.array().square() + mu_b.array().square() + kC1) *
      (var_a.array() + var_b.array() + kC2);
  return (num / den).mean();
}

namespace {

struct AdapterSlot {
  std::string id;
  PerceptualAdapter fn;
};

AdapterSlot& adapter_slot() {
  static AdapterSlot slot;
  return slot;
}

Eigen::MatrixXd downsample(const Eigen::MatrixXd& img, long factor) {
  const long h = img.rows() / factor, w = img.cols() / factor;
  Eigen::MatrixXd out(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      out(r, c) = img.block(r * factor, c * factor, factor, factor).mean();
  return out;
}

Eigen::MatrixXd gradient_magnitude(const Eigen::MatrixXd& img) {
  const long h = img.rows() - 1, w = img.cols() - 1;
  Eigen::MatrixXd g(h, w);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      g(r, c) = std::abs(img(r + 1, c) - img(r, c)) +
                std::abs(img(r, c + 1) - img(r, c));
  return g;
}

Eigen::VectorXd cell_histogram(const Eigen::MatrixXd& g, long r0, long c0,
                               long rows, long cols) {
  constexpr int kBins = 16;
  Eigen::VectorXd hist = Eigen::VectorXd::Zero(kBins);
  for (long r = r0; r < r0 + rows; ++r)
    for (long c = c0; c < c0 + cols; ++c) {
      const int bin =
          std::min(kBins - 1, int(std::floor(g(r, c) / 2.0 * kBins)));
      hist(std::max(0, bin)) += 1.0;
    }
  return hist / double(rows * cols);
}

double surrogate_distance(const Image& a, const Image& b) {
  const Eigen::MatrixXd la = to_gray(a);
  const Eigen::MatrixXd lb = to_gray(b);
  double acc = 0.0;
  long cells = 0;
  for (long factor : {1L, 2L, 4L}) {
    if (la.rows() / factor < 3 || la.cols() / factor < 3) continue;
    const Eigen::MatrixXd gda = gradient_magnitude(downsample(la, factor));
    const Eigen::MatrixXd gdb = gradient_magnitude(downsample(lb, factor));
    const long rh = gda.rows() / 2, cw = gda.cols() / 2;
    for (int qr = 0; qr < 2; ++qr)
      for (int qc = 0; qc < 2; ++qc) {
        const long rows = qr == 0 ? rh : gda.rows() - rh;
        const long cols = qc == 0 ? cw : gda.cols() - cw;
        if (rows < 1 || cols < 1) continue;
        const Eigen::VectorXd ha =
            cell_histogram(gda, qr * rh, qc * cw, rows, cols);
        const Eigen::VectorXd hb =
            cell_histogram(gdb, qr * rh, qc * cw, rows, cols);
        acc += (ha - hb).cwiseAbs().sum();
        ++cells;
      }
  }
  return cells > 0 ? acc / double(cells) : 0.0;
}

}  // namespace

void register_perceptual_adapter(const std::string& id, PerceptualAdapter fn) {
  adapter_slot() = {id, std::move(fn)};
}

void clear_perceptual_adapter() { adapter_slot() = {}; }

PerceptualResult perceptual_distance(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width())
    raise(Errc::shape_mismatch, "perceptual distance inputs differ in size");
  const AdapterSlot& slot = adapter_slot();
  if (slot.fn) return {slot.fn(a, b), false, slot.id};
  return {surrogate_distance(a, b), true, "gradient_histogram_surrogate"};
}

std::string report_to_text(const MetricsReport& report) {
  std::string out = "# dea-metrics-report v1\n";
  char line[256];
  std::snprintf(line, sizeof(line), "perceptual_backend=%s surrogate=%d\n",
                report.perceptual_id.c_str(), report.perceptual_surrogate ? 1 : 0);
  out += line;
  for (const auto& v : report.per_view) {
    std::snprintf(line, sizeof(line),
                  "view=%ld domain=%ld ssim=%.17g perceptual=%.17g\n", v.view,
                  v.domain, v.ssim, v.perceptual);
    out += line;
  }
  std::snprintf(line, sizeof(line), "ssim_mean=%.17g\n", report.ssim_mean);
  out += line;
  std::snprintf(line, sizeof(line), "perceptual_mean=%.17g\n",
                report.perceptual_mean);
  out += line;
  if (report.has_chamfer) {
    std::snprintf(line, sizeof(line), "chamfer=%.17g\n", report.chamfer);
    out += line;
  }
  return out;
}

}  // namespace dea
