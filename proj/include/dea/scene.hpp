#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dea/image.hpp"

namespace dea {

enum class ShapeKind { square, triangle, disc, star };

const char* shape_kind_name(ShapeKind kind);
ShapeKind shape_kind_from_name(const std::string& name);

// A single object rendered from n_v azimuths in two output domains: a color
// image on white background (domain 0) and a silhouette map (domain 1).
struct ProceduralScene {
  ShapeKind shape = ShapeKind::square;
  Eigen::Vector3d color{0.8, 0.2, 0.2};
  std::vector<double> azimuths;
  uint64_t texture_seed = 0;
};

// Orthographic rendering of the shape rotated in the image plane by the view's
// azimuth, supersampled so edges carry fractional coverage.
// domain 0: RGB; domain 1: single-channel silhouette (1 = object).
Image render_view(const ProceduralScene& scene, long view, long domain, long side);

// Front view color render with the coverage as an alpha plane, used as the
// attack input so the mask can be extracted from alpha.
Image render_input(const ProceduralScene& scene, long side);

std::vector<ProceduralScene> make_dataset(long count, long n_views, uint64_t seed);

// Persists renders of every scene plus a scene-list index file.
void save_scene_set(const std::string& dir, const std::vector<ProceduralScene>& scenes,
                    long side);
std::vector<ProceduralScene> load_scene_index(const std::string& path);

}  // namespace dea
