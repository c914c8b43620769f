#include "dea/pointcloud.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "dea/error.hpp"

namespace dea {

void validate_cloud(const PointCloud& cloud) {
  if (cloud.points.empty()) raise(Errc::empty_cloud, "point cloud is empty");
  for (const auto& p : cloud.points)
    if (!p.allFinite()) raise(Errc::empty_cloud, "point cloud has non-finite points");
}

double chamfer_distance(const PointCloud& p, const PointCloud& q) {
  validate_cloud(p);
  validate_cloud(q);
  auto directional = [](const PointCloud& a, const PointCloud& b) {
    double acc = 0.0;
    for (const auto& pa : a.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& pb : b.points)
        best = std::min(best, (pa - pb).squaredNorm());
      acc += best;
    }
    return acc / double(a.points.size());
  };
  return directional(p, q) + directional(q, p);
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open point cloud " + path);
  PointCloud cloud;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    Eigen::Vector3d p;
    if (!(row >> p(0) >> p(1) >> p(2)))
      raise(Errc::io_error, "malformed xyz line in " + path + ": " + line);
    cloud.points.push_back(p);
  }
  validate_cloud(cloud);
  return cloud;
}

void write_xyz(const std::string& path, const PointCloud& cloud) {
  validate_cloud(cloud);
  std::ofstream out(path);
  if (!out) raise(Errc::io_error, "cannot write point cloud " + path);
  out.precision(17);
  for (const auto& p : cloud.points)
    out << p(0) << ' ' << p(1) << ' ' << p(2) << '\n';
}

PointCloud read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open point cloud " + path);
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply")
    raise(Errc::io_error, path + " is not a ply file");
  long vertex_count = -1;
  bool ascii = false;
  bool in_vertex_element = false;
  std::vector<std::string> vertex_props;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string word;
    row >> word;
    if (word == "format") {
      std::string fmt;
      row >> fmt;
      ascii = fmt == "ascii";
    } else if (word == "element") {
      std::string name;
      long count;
      row >> name >> count;
      in_vertex_element = name == "vertex";
      if (in_vertex_element) vertex_count = count;
    } else if (word == "property" && in_vertex_element) {
      std::string type, name;
      row >> type >> name;
      vertex_props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) raise(Errc::io_error, "only ascii ply is supported: " + path);
  if (vertex_count < 0) raise(Errc::io_error, "ply lacks a vertex element: " + path);
  long ix = -1, iy = -1, iz = -1;
  for (size_t i = 0; i < vertex_props.size(); ++i) {
    if (vertex_props[i] == "x") ix = long(i);
    if (vertex_props[i] == "y") iy = long(i);
    if (vertex_props[i] == "z") iz = long(i);
  }
  if (ix < 0 || iy < 0 || iz < 0)
    raise(Errc::io_error, "ply vertex element lacks x/y/z properties: " + path);
  PointCloud cloud;
  for (long v = 0; v < vertex_count; ++v) {
    if (!std::getline(in, line))
      raise(Errc::io_error, "ply vertex data truncated: " + path);
    std::istringstream row(line);
    std::vector<double> values;
    double x;
    while (row >> x) values.push_back(x);
    if (long(values.size()) < long(vertex_props.size()))
      raise(Errc::io_error, "malformed ply vertex line: " + line);
    cloud.points.emplace_back(values[size_t(ix)], values[size_t(iy)],
                              values[size_t(iz)]);
  }
  validate_cloud(cloud);
  return cloud;
}

PointCloud read_pointcloud(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
    return read_ply(path);
  return read_xyz(path);
}

}  // namespace dea
