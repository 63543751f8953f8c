#pragma once

#include <Eigen/Geometry>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "loopclose/cell_map.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

struct TrajectoryEntry {
  double timestamp = 0.0;
  RigidTransform pose;
};

namespace detail {

inline std::runtime_error io_error(const std::filesystem::path& path, const std::string& what) {
  return std::runtime_error(path.string() + ": " + what);
}

inline int ply_type_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
      type == "float" || type == "float32") {
    return 4;
  }
  if (type == "double" || type == "float64") return 8;
  return -1;
}

}  // namespace detail

/// Reads an ASCII or binary little-endian PLY vertex cloud. Only the x/y/z
/// properties are consumed; other scalar vertex properties are skipped.
inline std::vector<Vec3> read_ply(std::istream& is, const std::filesystem::path& path = "ply") {
  std::string line;
  if (!std::getline(is, line) || line.substr(0, 3) != "ply") {
    throw detail::io_error(path, "not a PLY file");
  }
  bool binary = false;
  std::size_t vertex_count = 0;
  struct Property {
    int size = 0;
    int axis = -1;  // 0,1,2 for x,y,z
    bool is_double = false;
  };
  std::vector<Property> properties;
  bool in_vertex_element = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    if (token == "comment") continue;
    if (token == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw detail::io_error(path, "unsupported PLY format: " + fmt);
      }
    } else if (token == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) vertex_count = count;
    } else if (token == "property" && in_vertex_element) {
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw detail::io_error(path, "list property in vertex element");
      Property p;
      p.size = detail::ply_type_size(type);
      if (p.size < 0) throw detail::io_error(path, "unknown property type: " + type);
      p.is_double = (p.size == 8);
      if (name == "x") p.axis = 0;
      if (name == "y") p.axis = 1;
      if (name == "z") p.axis = 2;
      properties.push_back(p);
    } else if (token == "end_header") {
      break;
    }
  }
  bool has[3] = {false, false, false};
  for (const auto& p : properties) {
    if (p.axis >= 0) has[p.axis] = true;
  }
  if (!has[0] || !has[1] || !has[2]) throw detail::io_error(path, "missing x/y/z properties");

  std::vector<Vec3> points;
  points.reserve(vertex_count);
  if (binary) {
    std::size_t stride = 0;
    for (const auto& p : properties) stride += p.size;
    std::vector<char> row(stride);
    for (std::size_t i = 0; i < vertex_count; ++i) {
      if (!is.read(row.data(), static_cast<std::streamsize>(stride))) {
        throw detail::io_error(path, "truncated binary payload");
      }
      Vec3 v = Vec3::Zero();
      std::size_t off = 0;
      for (const auto& p : properties) {
        if (p.axis >= 0) {
          if (p.is_double) {
            double d;
            std::memcpy(&d, row.data() + off, 8);
            v[p.axis] = d;
          } else if (p.size == 4) {
            float f;
            std::memcpy(&f, row.data() + off, 4);
            v[p.axis] = static_cast<double>(f);
          } else {
            throw detail::io_error(path, "coordinate property must be float or double");
          }
        }
        off += p.size;
      }
      points.push_back(v);
    }
  } else {
    for (std::size_t i = 0; i < vertex_count; ++i) {
      if (!std::getline(is, line)) throw detail::io_error(path, "truncated ASCII payload");
      std::istringstream ls(line);
      Vec3 v = Vec3::Zero();
      double value;
      for (const auto& p : properties) {
        if (!(ls >> value)) throw detail::io_error(path, "short vertex row");
        if (p.axis >= 0) v[p.axis] = value;
      }
      points.push_back(v);
    }
  }
  return points;
}

/// Binary little-endian PLY with float32 x/y/z.
inline void write_ply_binary(std::ostream& os, const std::vector<Vec3>& points) {
  os << "ply\nformat binary_little_endian 1.0\n"
     << "element vertex " << points.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\nend_header\n";
  for (const Vec3& p : points) {
    const float row[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    os.write(reinterpret_cast<const char*>(row), sizeof(row));
  }
}

/// Whitespace-separated XYZ text, one point per line.
inline std::vector<Vec3> read_xyz(std::istream& is, const std::filesystem::path& path = "xyz") {
  std::vector<Vec3> points;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v.x() >> v.y() >> v.z())) {
      throw detail::io_error(path, "bad XYZ row: " + line);
    }
    points.push_back(v);
  }
  return points;
}

inline std::vector<Vec3> read_point_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw detail::io_error(path, "cannot open");
  const std::string ext = path.extension().string();
  if (ext == ".ply") return read_ply(is, path);
  return read_xyz(is, path);
}

/// TUM trajectory: "timestamp tx ty tz qx qy qz qw" per line.
inline std::vector<TrajectoryEntry> read_tum(std::istream& is,
                                             const std::filesystem::path& path = "tum") {
  std::vector<TrajectoryEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    TrajectoryEntry e;
    double qx, qy, qz, qw;
    if (!(ls >> e.timestamp >> e.pose.translation.x() >> e.pose.translation.y() >>
          e.pose.translation.z() >> qx >> qy >> qz >> qw)) {
      throw detail::io_error(path, "bad TUM row: " + line);
    }
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (q.norm() < 1e-9) throw detail::io_error(path, "zero quaternion");
    q.normalize();
    e.pose.rotation = q.toRotationMatrix();
    if (!out.empty() && e.timestamp <= out.back().timestamp) {
      throw detail::io_error(path, "timestamps must be strictly increasing");
    }
    out.push_back(e);
  }
  return out;
}

inline void write_tum(std::ostream& os, const std::vector<TrajectoryEntry>& trajectory) {
  char buf[256];
  for (const TrajectoryEntry& e : trajectory) {
    Eigen::Quaterniond q(e.pose.rotation);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", e.timestamp,
                  e.pose.translation.x(), e.pose.translation.y(), e.pose.translation.z(), q.x(),
                  q.y(), q.z(), q.w());
    os << buf;
  }
}

/// Cell summary: one row per cell with center, count, mean, covariance
/// upper triangle, shape label and feature direction.
inline void write_cell_summary_csv(std::ostream& os, const CellMap& map) {
  os << "center_x,center_y,center_z,count,mean_x,mean_y,mean_z,"
        "cov_xx,cov_xy,cov_xz,cov_yy,cov_yz,cov_zz,shape,dir_x,dir_y,dir_z\n";
  char buf[512];
  map.for_each_cell([&](const Cell& c) {
    std::snprintf(buf, sizeof(buf),
                  "%.9g,%.9g,%.9g,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%s,%.9g,%.9g,%.9g\n",
                  c.center.x(), c.center.y(), c.center.z(), static_cast<long long>(c.count),
                  c.mean.x(), c.mean.y(), c.mean.z(), c.covariance(0, 0), c.covariance(0, 1),
                  c.covariance(0, 2), c.covariance(1, 1), c.covariance(1, 2), c.covariance(2, 2),
                  to_string(c.shape), c.feature_direction.x(), c.feature_direction.y(),
                  c.feature_direction.z());
    os << buf;
  });
}

/// All raw registered points of the map, in cell insertion order.
inline std::vector<Vec3> map_points(const CellMap& map) {
  std::vector<Vec3> out;
  map.for_each_cell([&](const Cell& c) {
    out.insert(out.end(), c.points.begin(), c.points.end());
  });
  return out;
}

}  // namespace loopclose
