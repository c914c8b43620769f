#include "dea/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dea/error.hpp"
#include "dea/image_io.hpp"
#include "dea/rng.hpp"

namespace dea {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool inside_shape(ShapeKind shape, double u, double v) {
  switch (shape) {
    case ShapeKind::square:
      return std::abs(u) <= 0.60 && std::abs(v) <= 0.60;
    case ShapeKind::triangle: {
      // equilateral, circumradius 0.80, one vertex up
      const double r = 0.80;
      for (int i = 0; i < 3; ++i) {
        const double a = kPi / 2.0 + 2.0 * kPi * i / 3.0;
        const double b = kPi / 2.0 + 2.0 * kPi * (i + 1) / 3.0;
        const double ex = std::cos(b) - std::cos(a);
        const double ey = std::sin(b) - std::sin(a);
        const double px = u / r - std::cos(a);
        const double py = v / r - std::sin(a);
        if (ex * py - ey * px < 0.0) return false;
      }
      return true;
    }
    case ShapeKind::disc:
      return u * u + v * v <= 0.66 * 0.66;
    case ShapeKind::star: {
      // five-lobed rosette, lobe tips up to 0.85
      const double rho = std::sqrt(u * u + v * v);
      const double theta = std::atan2(v, u);
      return rho <= 0.38 + 0.47 * (0.5 + 0.5 * std::cos(5.0 * theta));
    }
  }
  return false;
}

// per-scene surface grain on a coarse lattice in object coordinates, so the
// pattern rides the shape through every view rotation
constexpr long kGrainCells = 8;

Eigen::MatrixXd make_grain(const ProceduralScene& scene) {
  Rng rng(derive_seed(scene.texture_seed, 0x4752ULL));
  Eigen::MatrixXd g(kGrainCells, kGrainCells);
  for (long r = 0; r < kGrainCells; ++r)
    for (long c = 0; c < kGrainCells; ++c) g(r, c) = rng.uniform();
  return g;
}

double grain_at(const Eigen::MatrixXd& g, double u, double v) {
  const auto cell = [](double x) {
    long i = long((x + 1.0) * 0.5 * double(kGrainCells));
    return std::clamp(i, 0L, kGrainCells - 1);
  };
  return g(cell(v), cell(u));
}

double coverage(const ProceduralScene& scene, double azimuth, long r, long c,
                long side) {
  const int ss = 4;
  const double ca = std::cos(-azimuth), sa = std::sin(-azimuth);
  int hits = 0;
  for (int i = 0; i < ss; ++i)
    for (int j = 0; j < ss; ++j) {
      const double y = (double(r) + (i + 0.5) / ss) / side * 2.0 - 1.0;
      const double x = (double(c) + (j + 0.5) / ss) / side * 2.0 - 1.0;
      const double u = ca * x - sa * y;
      const double v = sa * x + ca * y;
      if (inside_shape(scene.shape, u, v)) ++hits;
    }
  return double(hits) / double(ss * ss);
}

double azimuth_of(const ProceduralScene& scene, long view) {
  if (view < 0 || view >= long(scene.azimuths.size()))
    raise(Errc::config_error, "view index outside the scene's azimuth list");
  return scene.azimuths[size_t(view)];
}

}  // namespace

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
    case ShapeKind::disc: return "disc";
    case ShapeKind::star: return "star";
  }
  return "unknown";
}

ShapeKind shape_kind_from_name(const std::string& name) {
  if (name == "square") return ShapeKind::square;
  if (name == "triangle") return ShapeKind::triangle;
  if (name == "disc") return ShapeKind::disc;
  if (name == "star") return ShapeKind::star;
  raise(Errc::config_error, "unknown shape kind: " + name);
}

Image render_view(const ProceduralScene& scene, long view, long domain, long side) {
  const double az = azimuth_of(scene, view);
  if (domain == 1) {
    Image out = make_image(side, side, 1);
    for (long r = 0; r < side; ++r)
      for (long c = 0; c < side; ++c)
        out.planes[0](r, c) = coverage(scene, az, r, c, side);
    return out;
  }
  if (domain != 0) raise(Errc::config_error, "toy scenes have two domains");
  Image out = make_image(side, side, 3);
  const Eigen::MatrixXd g = make_grain(scene);
  const double ca = std::cos(-az), sa = std::sin(-az);
  for (long r = 0; r < side; ++r)
    for (long c = 0; c < side; ++c) {
      const double cov = coverage(scene, az, r, c, side);
      const double y = (double(r) + 0.5) / side * 2.0 - 1.0;
      const double x = (double(c) + 0.5) / side * 2.0 - 1.0;
      const double shade = 1.0 - 0.4 * grain_at(g, ca * x - sa * y, sa * x + ca * y);
      for (int ch = 0; ch < 3; ++ch)
        out.planes[size_t(ch)](r, c) =
            (1.0 - cov) + cov * scene.color(ch) * shade;
    }
  return out;
}

Image render_input(const ProceduralScene& scene, long side) {
  Image rgb = render_view(scene, 0, 0, side);
  const double az = azimuth_of(scene, 0);
  Eigen::MatrixXd alpha(side, side);
  for (long r = 0; r < side; ++r)
    for (long c = 0; c < side; ++c) alpha(r, c) = coverage(scene, az, r, c, side);
  rgb.planes.push_back(std::move(alpha));
  return rgb;
}

std::vector<ProceduralScene> make_dataset(long count, long n_views, uint64_t seed) {
  if (count < 1 || n_views < 1)
    raise(Errc::config_error, "dataset needs positive scene and view counts");
  Rng rng(derive_seed(seed, 0x5343454eULL));
  std::vector<ProceduralScene> scenes;
  scenes.reserve(size_t(count));
  const ShapeKind kinds[3] = {ShapeKind::square, ShapeKind::triangle,
                              ShapeKind::disc};
  for (long i = 0; i < count; ++i) {
    ProceduralScene s;
    s.shape = kinds[rng.uniform_int(0, 2)];
    // saturated hue, kept away from the white background
    const double hue = rng.uniform(0.0, 6.0);
    const int sector = int(hue);
    const double f = hue - sector;
    const double val = 0.85, sat = 0.9;
    const double p = val * (1.0 - sat);
    const double q = val * (1.0 - sat * f);
    const double t = val * (1.0 - sat * (1.0 - f));
    switch (sector % 6) {
      case 0: s.color = {val, t, p}; break;
      case 1: s.color = {q, val, p}; break;
      case 2: s.color = {p, val, t}; break;
      case 3: s.color = {p, q, val}; break;
      case 4: s.color = {t, p, val}; break;
      default: s.color = {val, p, q}; break;
    }
    const double base = rng.uniform(0.0, 2.0 * kPi);
    for (long v = 0; v < n_views; ++v)
      s.azimuths.push_back(base + 2.0 * kPi * double(v) / double(n_views));
    s.texture_seed = rng.next_u64();
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void save_scene_set(const std::string& dir, const std::vector<ProceduralScene>& scenes,
                    long side) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir + "/scenes.txt");
  if (!index) raise(Errc::io_error, "cannot write scene index in " + dir);
  index << std::setprecision(17);
  char name[128];
  for (size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    index << i << ' ' << shape_kind_name(s.shape) << ' ' << s.color(0) << ' '
          << s.color(1) << ' ' << s.color(2) << ' ' << s.texture_seed;
    for (double az : s.azimuths) index << ' ' << az;
    index << '\n';
    for (long v = 0; v < long(s.azimuths.size()); ++v)
      for (long d = 0; d < 2; ++d) {
        std::snprintf(name, sizeof(name), "%s/scene_%04zu_v%ld_d%ld.png",
                      dir.c_str(), i, v, d);
        write_image(name, render_view(s, v, d, side));
      }
  }
}

std::vector<ProceduralScene> load_scene_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open scene index " + path);
  std::vector<ProceduralScene> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    long idx;
    std::string shape;
    ProceduralScene s;
    if (!(row >> idx >> shape >> s.color(0) >> s.color(1) >> s.color(2) >>
          s.texture_seed))
      raise(Errc::io_error, "malformed scene index line: " + line);
    s.shape = shape_kind_from_name(shape);
    double az;
    while (row >> az) s.azimuths.push_back(az);
    if (s.azimuths.empty())
      raise(Errc::io_error, "scene index line lacks azimuths: " + line);
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace dea
