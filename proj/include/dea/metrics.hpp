#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dea/image.hpp"
#include "dea/pointcloud.hpp"

namespace dea {

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, L=1. Color inputs are luma-converted first.
double ssim(const Image& a, const Image& b);

struct PerceptualResult {
  double value = 0.0;
  bool surrogate = true;
  std::string id = "gradient_histogram_surrogate";
};

using PerceptualAdapter = std::function<double(const Image&, const Image&)>;

// Registers an external perceptual backend; pass an empty function to clear.
void register_perceptual_adapter(const std::string& id, PerceptualAdapter fn);
void clear_perceptual_adapter();

// Delegates to the registered adapter when present, otherwise computes the
// built-in surrogate: L1 distance between multi-scale gradient-magnitude
// histograms over 2x2 spatial cells.
PerceptualResult perceptual_distance(const Image& a, const Image& b);

struct ViewMetrics {
  long view = 0;
  long domain = 0;
  double ssim = 0.0;
  double perceptual = 0.0;
};

struct MetricsReport {
  std::vector<ViewMetrics> per_view;
  double ssim_mean = 0.0;
  double perceptual_mean = 0.0;
  bool perceptual_surrogate = true;
  std::string perceptual_id;
  bool has_chamfer = false;
  double chamfer = 0.0;
};

std::string report_to_text(const MetricsReport& report);

}  // namespace dea
