#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dea/error.hpp"
#include "dea/metrics.hpp"

namespace {

using dea::Image;
using dea::PointCloud;

Image random_gray(long h, long w, uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Image img = dea::make_image(h, w, 1);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) img.planes[0](r, c) = dist(gen);
  return img;
}

// Direct per-window evaluation with the same kernel definition, no separable
// filtering shortcuts.
double ssim_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const int radius = 5;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  Eigen::MatrixXd k(11, 11);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i)
    for (int j = -radius; j <= radius; ++j) {
      k(i + radius, j + radius) = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      norm += k(i + radius, j + radius);
    }
  k /= norm;

  double total = 0.0;
  long count = 0;
  for (long r = radius; r < a.rows() - radius; ++r)
    for (long c = radius; c < a.cols() - radius; ++c) {
      double mu_a = 0, mu_b = 0;
      for (int i = -radius; i <= radius; ++i)
        for (int j = -radius; j <= radius; ++j) {
          double w = k(i + radius, j + radius);
          mu_a += w * a(r + i, c + j);
          mu_b += w * b(r + i, c + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = -radius; i <= radius; ++i)
        for (int j = -radius; j <= radius; ++j) {
          double w = k(i + radius, j + radius);
          double da = a(r + i, c + j) - mu_a;
          double db = b(r + i, c + j) - mu_b;
          va += w * da * da;
          vb += w * db * db;
          cov += w * da * db;
        }
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
      ++count;
    }
  return total / double(count);
}

PointCloud random_cloud(size_t n, uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  PointCloud cloud;
  for (size_t i = 0; i < n; ++i)
    cloud.points.emplace_back(dist(gen), dist(gen), dist(gen));
  return cloud;
}

double chamfer_oracle(const PointCloud& p, const PointCloud& q) {
  auto directional = [](const PointCloud& from, const PointCloud& to) {
    double acc = 0.0;
    for (const auto& a : from.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : to.points) best = std::min(best, (a - b).squaredNorm());
      acc += best;
    }
    return acc / double(from.points.size());
  };
  return directional(p, q) + directional(q, p);
}

std::filesystem::path temp_path(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "dea_test_metrics";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("ssim of an image with itself is one") {
  Image img = random_gray(16, 16, 1);
  CHECK(dea::ssim(img, img) == 1.0);
}

TEST_CASE("ssim of opposite constants") {
  Image zeros = dea::make_image(16, 16, 1, 0.0);
  Image ones = dea::make_image(16, 16, 1, 1.0);
  CHECK(dea::ssim(zeros, ones) == doctest::Approx(1e-4 / (1.0 + 1e-4)).epsilon(1e-9));
}

TEST_CASE("ssim matches the sliding-window oracle") {
  for (uint32_t seed = 0; seed < 3; ++seed) {
    Image a = random_gray(20, 24, 100 + seed);
    Image b = random_gray(20, 24, 200 + seed);
    double direct = ssim_oracle(a.planes[0], b.planes[0]);
    CHECK(dea::ssim(a, b) == doctest::Approx(direct).epsilon(1e-8));
  }
}

TEST_CASE("ssim is symmetric and luma-converts color") {
  Image a = random_gray(16, 16, 5);
  Image b = random_gray(16, 16, 6);
  CHECK(dea::ssim(a, b) == doctest::Approx(dea::ssim(b, a)).epsilon(1e-12));

  Image color = dea::make_image(16, 16, 3);
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& p : color.planes)
    for (long r = 0; r < 16; ++r)
      for (long c = 0; c < 16; ++c) p(r, c) = dist(gen);
  Image gray = dea::make_image(16, 16, 1);
  gray.planes[0] = dea::luma(color);
  CHECK(dea::ssim(color, b) == doctest::Approx(dea::ssim(gray, b)).epsilon(1e-12));
}

TEST_CASE("ssim input validation") {
  Image a = random_gray(16, 16, 8);
  Image b = random_gray(16, 15, 9);
  CHECK_THROWS_AS(dea::ssim(a, b), dea::Error);
  Image tiny = random_gray(8, 8, 10);
  try {
    dea::ssim(tiny, tiny);
    CHECK(false);
  } catch (const dea::Error& e) {
    CHECK(e.code() == dea::Errc::too_small);
  }
}

TEST_CASE("chamfer oracle values") {
  PointCloud p, q;
  p.points.emplace_back(0, 0, 0);
  q.points.emplace_back(1, 0, 0);
  CHECK(dea::chamfer_distance(p, p) == 0.0);
  CHECK(dea::chamfer_distance(p, q) == doctest::Approx(2.0));
}

TEST_CASE("chamfer matches the double-loop oracle and is symmetric") {
  for (uint32_t seed = 0; seed < 4; ++seed) {
    PointCloud p = random_cloud(23, seed);
    PointCloud q = random_cloud(31, 50 + seed);
    double direct = chamfer_oracle(p, q);
    CHECK(dea::chamfer_distance(p, q) == doctest::Approx(direct).epsilon(1e-12));
    CHECK(dea::chamfer_distance(p, q) == dea::chamfer_distance(q, p));
  }
}

TEST_CASE("chamfer grows with rigid separation") {
  PointCloud p = random_cloud(20, 3);
  double prev = dea::chamfer_distance(p, p);
  for (double off : {0.5, 1.0, 2.0, 4.0}) {
    PointCloud shifted = p;
    for (auto& pt : shifted.points) pt.x() += off;
    double d = dea::chamfer_distance(p, shifted);
    CHECK(d >= prev);
    prev = d;
  }
}

TEST_CASE("chamfer rejects empty clouds") {
  PointCloud p = random_cloud(3, 4), empty;
  try {
    dea::chamfer_distance(p, empty);
    CHECK(false);
  } catch (const dea::Error& e) {
    CHECK(e.code() == dea::Errc::empty_cloud);
  }
}

TEST_CASE("xyz round trip and comments") {
  PointCloud cloud = random_cloud(9, 11);
  auto path = temp_path("cloud.xyz");
  dea::write_xyz(path.string(), cloud);
  PointCloud back = dea::read_xyz(path.string());
  REQUIRE(back.points.size() == cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i)
    CHECK((back.points[i] - cloud.points[i]).norm() == 0.0);

  auto commented = temp_path("commented.xyz");
  std::ofstream out(commented);
  out << "# header comment\n1 2 3\n\n4 5 6\n";
  out.close();
  CHECK(dea::read_xyz(commented.string()).points.size() == 2);
}

TEST_CASE("minimal ascii ply parsing") {
  auto path = temp_path("cloud.ply");
  std::ofstream out(path);
  out << "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "end_header\n0 0 0\n1 2 3\n";
  out.close();
  PointCloud cloud = dea::read_pointcloud(path.string());
  REQUIRE(cloud.points.size() == 2);
  CHECK(cloud.points[1] == Eigen::Vector3d(1, 2, 3));
}

TEST_CASE("perceptual surrogate basics") {
  dea::clear_perceptual_adapter();
  Image img = random_gray(16, 16, 20);
  dea::PerceptualResult same = dea::perceptual_distance(img, img);
  CHECK(same.value == 0.0);
  CHECK(same.surrogate);
  CHECK(same.id == "gradient_histogram_surrogate");

  Image rotated = dea::make_image(16, 16, 1);
  for (long r = 0; r < 16; ++r)
    for (long c = 0; c < 16; ++c) rotated.planes[0](r, c) = img.planes[0](15 - c, r);
  CHECK(dea::perceptual_distance(img, rotated).value > 0.0);
}

TEST_CASE("perceptual adapter delegation") {
  Image a = random_gray(16, 16, 21);
  Image b = random_gray(16, 16, 22);
  dea::register_perceptual_adapter("external_test_metric",
                                   [](const Image&, const Image&) { return 0.125; });
  dea::PerceptualResult res = dea::perceptual_distance(a, b);
  CHECK(res.value == 0.125);
  CHECK_FALSE(res.surrogate);
  CHECK(res.id == "external_test_metric");
  dea::clear_perceptual_adapter();
  CHECK(dea::perceptual_distance(a, b).surrogate);
}

TEST_CASE("report serialization carries all fields") {
  dea::MetricsReport report;
  report.per_view = {{0, 0, 0.9, 0.05}, {1, 1, 0.8, 0.1}};
  report.ssim_mean = 0.85;
  report.perceptual_mean = 0.075;
  report.perceptual_surrogate = true;
  report.perceptual_id = "gradient_histogram_surrogate";
  report.has_chamfer = true;
  report.chamfer = 0.25;
  std::string text = dea::report_to_text(report);
  CHECK(text.find("ssim_mean=") != std::string::npos);
  CHECK(text.find("chamfer=") != std::string::npos);
  CHECK(text.find("view=1") != std::string::npos);
  CHECK(text.find("gradient_histogram_surrogate") != std::string::npos);
}
