#include "dea/defense.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dea/error.hpp"

namespace dea {

void DefenseSpec::validate() const {
  if (kind == Kind::squeeze && (bits < 1 || bits > 8))
    raise(Errc::bad_bits, "squeeze bits must lie in [1, 8]");
  if (kind == Kind::smooth && (kernel < 3 || kernel % 2 == 0))
    raise(Errc::bad_kernel, "smooth kernel must be odd and >= 3");
}

DefenseSpec parse_defense_spec(const std::string& text) {
  DefenseSpec spec;
  if (text.empty() || text == "none") return spec;
  const size_t colon = text.find(':');
  const std::string name = text.substr(0, colon);
  if (name == "squeeze")
    spec.kind = DefenseSpec::Kind::squeeze;
  else if (name == "smooth")
    spec.kind = DefenseSpec::Kind::smooth;
  else
    raise(Errc::config_error, "unknown defense: " + name);
  if (colon != std::string::npos) {
    const std::string arg = text.substr(colon + 1);
    const size_t eq = arg.find('=');
    if (eq == std::string::npos)
      raise(Errc::config_error, "defense parameter must look like key=value: " + arg);
    const std::string key = arg.substr(0, eq);
    const std::string value = arg.substr(eq + 1);
    try {
      if (key == "bits" && spec.kind == DefenseSpec::Kind::squeeze)
        spec.bits = std::stoi(value);
      else if (key == "kernel" && spec.kind == DefenseSpec::Kind::smooth)
        spec.kernel = std::stoi(value);
      else
        raise(Errc::config_error, "unknown defense parameter: " + key);
    } catch (const std::logic_error&) {
      raise(Errc::config_error, "defense parameter is not a number: " + value);
    }
  }
  spec.validate();
  return spec;
}

std::string defense_spec_to_string(const DefenseSpec& spec) {
  switch (spec.kind) {
    case DefenseSpec::Kind::none: return "none";
    case DefenseSpec::Kind::squeeze:
      return "squeeze:bits=" + std::to_string(spec.bits);
    case DefenseSpec::Kind::smooth:
      return "smooth:kernel=" + std::to_string(spec.kernel);
  }
  return "none";
}

Image bit_depth_squeeze(const Image& image, int bits) {
  if (bits < 1 || bits > 8) raise(Errc::bad_bits, "squeeze bits must lie in [1, 8]");
  const double levels = double((1 << bits) - 1);
  Image out = image;
  for (auto& plane : out.planes)
    plane = (plane.array() * levels + 0.5).floor().matrix() / levels;
  return out;
}

namespace {

// reflect without repeating the border sample
long reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

}  // namespace

Image median_smooth(const Image& image, int kernel) {
  if (kernel < 3 || kernel % 2 == 0)
    raise(Errc::bad_kernel, "smooth kernel must be odd and >= 3");
  const long h = image.height(), w = image.width();
  if (kernel > std::min(h, w))
    raise(Errc::bad_kernel, "smooth kernel exceeds image size");
  const long r = kernel / 2;
  Image out = image;
  std::vector<double> window;
  window.reserve(size_t(kernel) * size_t(kernel));
  for (size_t ch = 0; ch < image.planes.size(); ++ch) {
    const Eigen::MatrixXd& src = image.planes[ch];
    Eigen::MatrixXd& dst = out.planes[ch];
    for (long i = 0; i < h; ++i)
      for (long j = 0; j < w; ++j) {
        window.clear();
        for (long di = -r; di <= r; ++di)
          for (long dj = -r; dj <= r; ++dj)
            window.push_back(
                src(reflect_index(i + di, h), reflect_index(j + dj, w)));
        auto mid = window.begin() + long(window.size()) / 2;
        std::nth_element(window.begin(), mid, window.end());
        dst(i, j) = *mid;
      }
  }
  return out;
}

Image apply_defense(const Image& image, const DefenseSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DefenseSpec::Kind::none: return image;
    case DefenseSpec::Kind::squeeze: return bit_depth_squeeze(image, spec.bits);
    case DefenseSpec::Kind::smooth: return median_smooth(image, spec.kernel);
  }
  return image;
}

}  // namespace dea
