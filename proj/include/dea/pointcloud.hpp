#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dea {

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
};

void validate_cloud(const PointCloud& cloud);

// Symmetric sum of directional mean squared nearest-neighbor distances.
double chamfer_distance(const PointCloud& p, const PointCloud& q);

// ASCII "x y z" per line.
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

// Minimal ascii PLY subset: vertex element with x, y, z properties.
PointCloud read_ply(const std::string& path);

// Dispatches on the .ply extension, otherwise reads XYZ.
PointCloud read_pointcloud(const std::string& path);

}  // namespace dea
