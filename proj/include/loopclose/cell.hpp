#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "loopclose/se3.hpp"

namespace loopclose {

/// Integer grid coordinates of a cell under the floor partition.
struct GridIndex {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
  std::int64_t iz = 0;

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
  friend auto operator<=>(const GridIndex&, const GridIndex&) = default;
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace detail

/// Per-axis mixed hashes XOR-combined. Distinct per-axis salts keep
/// permuted coordinates from colliding.
inline std::uint64_t hash_of(const GridIndex& g) {
  const std::uint64_t hx = detail::mix64(static_cast<std::uint64_t>(g.ix) + 0x9e3779b97f4a7c15ULL);
  const std::uint64_t hy = detail::mix64(static_cast<std::uint64_t>(g.iy) + 0xc2b2ae3d27d4eb4fULL);
  const std::uint64_t hz = detail::mix64(static_cast<std::uint64_t>(g.iz) + 0x165667b19e3779f9ULL);
  return hx ^ hy ^ hz;
}

struct GridIndexHash {
  std::size_t operator()(const GridIndex& g) const { return hash_of(g); }
};

/// Floor partition: index k per axis satisfies k*S <= p < (k+1)*S.
inline GridIndex grid_index_of(const Vec3& p, const Vec3& cell_size) {
  if (!p.allFinite()) throw std::invalid_argument("grid_index_of: non-finite point");
  if (!(cell_size.minCoeff() > 0.0)) {
    throw std::invalid_argument("grid_index_of: cell size must be positive");
  }
  GridIndex g;
  g.ix = static_cast<std::int64_t>(std::floor(p.x() / cell_size.x()));
  g.iy = static_cast<std::int64_t>(std::floor(p.y() / cell_size.y()));
  g.iz = static_cast<std::int64_t>(std::floor(p.z() / cell_size.z()));
  return g;
}

inline Vec3 cell_center_of(const GridIndex& g, const Vec3& cell_size) {
  return Vec3((static_cast<double>(g.ix) + 0.5) * cell_size.x(),
              (static_cast<double>(g.iy) + 0.5) * cell_size.y(),
              (static_cast<double>(g.iz) + 0.5) * cell_size.z());
}

enum class CellShape { None, Plane, Line };

inline const char* to_string(CellShape s) {
  switch (s) {
    case CellShape::Plane: return "plane";
    case CellShape::Line: return "line";
    default: return "none";
  }
}

/// Fixed cube of space. Center is static once created; mean/covariance are
/// maintained incrementally as points arrive. Covariance uses the unbiased
/// (N-1) normalization and is the zero matrix for count < 2.
struct Cell {
  GridIndex index;
  Vec3 center = Vec3::Zero();
  Vec3 half_size = Vec3::Zero();
  std::int64_t count = 0;
  Vec3 mean = Vec3::Zero();
  Mat3 covariance = Mat3::Zero();
  std::vector<Vec3> points;

  // Set by the descriptor stage; None until classified.
  CellShape shape = CellShape::None;
  Vec3 feature_direction = Vec3::Zero();

  bool contains(const Vec3& p) const {
    for (int k = 0; k < 3; ++k) {
      const double d = p[k] - center[k];
      if (d < -half_size[k] || d >= half_size[k]) return false;
    }
    return true;
  }
};

inline Cell make_cell(const GridIndex& g, const Vec3& cell_size) {
  Cell c;
  c.index = g;
  c.center = cell_center_of(g, cell_size);
  c.half_size = 0.5 * cell_size;
  return c;
}

/// Incremental mean/covariance update. Equivalent to recomputing the batch
/// moments over all stored points.
inline void update_stats(Cell& cell, const Vec3& p) {
  if (!cell.contains(p)) {
    throw std::invalid_argument("update_stats: point outside cell bounds");
  }
  const std::int64_t n = cell.count;
  if (n == 0) {
    cell.mean = p;
    cell.covariance = Mat3::Zero();
  } else {
    const double dn = static_cast<double>(n);
    const Vec3 old_mean = cell.mean;
    const Vec3 new_mean = (dn * old_mean + p) / (dn + 1.0);
    const Vec3 e = p - old_mean;       // new point about the old mean
    const Vec3 d = old_mean - new_mean;
    // Symmetric form of the rank-one recursion; d is parallel to e, so the
    // cross terms e*d^T and d*e^T coincide in exact arithmetic.
    cell.covariance = ((dn - 1.0) * cell.covariance + e * e.transpose() +
                       (dn + 1.0) * d * d.transpose() + e * d.transpose() +
                       d * e.transpose()) /
                      dn;
    cell.mean = new_mean;
  }
  cell.points.push_back(p);
  cell.count = n + 1;
}

}  // namespace loopclose
