#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "loopclose/cell.hpp"
#include "loopclose/eig3.hpp"
#include "loopclose/histogram.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

struct ClassifyParams {
  int min_points = 5;
  double plane_ratio = 3.0;
  double line_ratio = 3.0;
};

struct CellFeature {
  CellShape shape = CellShape::None;
  Vec3 direction = Vec3::Zero();
};

/// Shape classification from the eigenvalues of the cell covariance.
/// Plane when the middle eigenvalue dominates the smallest (normal = V3),
/// else line when the largest dominates the middle (direction = V1).
/// A positivity guard keeps rank-deficient cases honest: collinear points
/// (lambda2 = lambda3 = 0) classify as a line, not a plane.
inline CellFeature classify_cell(const Cell& cell, const ClassifyParams& params = {}) {
  CellFeature out;
  if (cell.count < params.min_points) return out;
  const SymmetricEigen3 eig = eig_sym3(cell.covariance);
  const double l1 = eig.eigenvalues[0];
  const double l2 = eig.eigenvalues[1];
  const double l3 = eig.eigenvalues[2];
  if (l2 > 0.0 && l2 >= params.plane_ratio * l3) {
    out.shape = CellShape::Plane;
    out.direction = eig.eigenvectors.col(2);
  } else if (l1 > 0.0 && l1 >= params.line_ratio * l2) {
    out.shape = CellShape::Line;
    out.direction = eig.eigenvectors.col(0);
  }
  return out;
}

/// Keyframe-level rotation that aligns the dominant plane-normal directions
/// with the coordinate axes. Needs at least 3 plane directions; returns
/// nullopt for degenerate keyframes (caller falls back to identity and
/// flags the keyframe as weakly invariant).
inline std::optional<Mat3> canonical_rotation(const std::vector<Vec3>& plane_directions) {
  if (plane_directions.size() < 3) return std::nullopt;
  Mat3 sigma = Mat3::Zero();
  for (const Vec3& d : plane_directions) sigma += d * d.transpose();
  const SymmetricEigen3 eig = eig_sym3(sigma);
  const Vec3 v1 = eig.eigenvectors.col(0);
  const Vec3 v2 = eig.eigenvectors.col(1);
  Mat3 r;
  r.row(0) = v1.transpose();
  r.row(1) = v2.transpose();
  r.row(2) = v1.cross(v2).transpose();
  return r;
}

/// Euler angles of a feature direction, after folding it onto the positive-x
/// half space. theta = asin(z) + 90 in [0, 180]; phi = atan2(y, x) + 90 in
/// [0, 180] (well-defined at x = 0: +y maps to 180, -y to 0).
inline std::pair<double, double> direction_to_angles(const Vec3& d) {
  if (std::abs(d.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("direction_to_angles: direction must be unit-norm");
  }
  Vec3 f = d;
  if (f.x() < 0.0) f = -f;
  const double theta = std::asin(std::clamp(f.z(), -1.0, 1.0)) * 180.0 / M_PI + 90.0;
  const double phi = std::atan2(f.y(), f.x()) * 180.0 / M_PI + 90.0;
  return {theta, phi};
}

inline int angle_bin(double degrees) {
  const int bin = static_cast<int>(std::floor(degrees / Histogram2D::kBinDegrees));
  return std::clamp(bin, 0, Histogram2D::kBins - 1);
}

/// Pre-blur binning: rotates every feature direction by the canonical
/// rotation and increments the plane or line histogram at
/// (floor(phi/3), floor(theta/3)).
inline std::pair<Histogram2D, Histogram2D> bin_feature_directions(
    std::span<const Cell* const> cells, const Mat3& rotation) {
  Histogram2D plane, line;
  for (const Cell* cell : cells) {
    if (cell->shape == CellShape::None) continue;
    const Vec3 rotated = rotation * cell->feature_direction;
    const auto [theta, phi] = direction_to_angles(rotated);
    Histogram2D& h = (cell->shape == CellShape::Plane) ? plane : line;
    h.at(angle_bin(phi), angle_bin(theta)) += 1.0;
  }
  return {plane, line};
}

struct HistogramParams {
  double blur_sigma = 1.0;
};

/// Blurred plane/line histograms of a keyframe's classified cells.
inline std::pair<Histogram2D, Histogram2D> build_histograms(
    std::span<const Cell* const> cells, const Mat3& rotation,
    const HistogramParams& params = {}) {
  auto [plane, line] = bin_feature_directions(cells, rotation);
  return {gaussian_blur(plane, params.blur_sigma), gaussian_blur(line, params.blur_sigma)};
}

/// A group of n consecutive frames treated as one local map patch.
struct Keyframe {
  std::int64_t id = 0;
  std::int64_t first_frame = 0;
  std::int64_t last_frame = 0;
  std::vector<GridIndex> cells;  // sorted, unique
  Mat3 canonical_rotation = Mat3::Identity();
  bool weak_invariance = false;  // fewer than 3 plane cells; identity rotation
  Histogram2D hist_plane;
  Histogram2D hist_line;
  RigidTransform reference_pose;  // odometry pose of its first frame
};

}  // namespace loopclose
