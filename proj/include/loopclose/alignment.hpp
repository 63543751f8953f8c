#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "loopclose/cell.hpp"
#include "loopclose/octree.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

/// A classified cell reduced to what registration needs: its mean, feature
/// direction (plane normal or line direction) and shape.
struct FeatureCell {
  Vec3 mean = Vec3::Zero();
  Vec3 direction = Vec3::Zero();
  CellShape shape = CellShape::None;
};

inline std::vector<FeatureCell> feature_cells_from(std::span<const Cell* const> cells) {
  std::vector<FeatureCell> out;
  for (const Cell* c : cells) {
    if (c->shape == CellShape::None) continue;
    out.push_back({c->mean, c->feature_direction, c->shape});
  }
  return out;
}

inline Vec3 feature_centroid(std::span<const FeatureCell> cells) {
  Vec3 sum = Vec3::Zero();
  if (cells.empty()) return sum;
  for (const FeatureCell& c : cells) sum += c.mean;
  return sum / static_cast<double>(cells.size());
}

/// Target side of a registration: feature cells indexed by an octree over
/// their means for radius correspondence search.
class AlignmentTarget {
 public:
  explicit AlignmentTarget(std::vector<FeatureCell> cells) : cells_(std::move(cells)) {
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      octree_.insert(cells_[i].mean, static_cast<int>(i));
    }
  }

  const std::vector<FeatureCell>& cells() const { return cells_; }
  bool empty() const { return cells_.empty(); }

  void collect_in_box(const Vec3& p, double radius, std::vector<int>& out) const {
    out.clear();
    octree_.query_box(p - Vec3::Constant(radius), p + Vec3::Constant(radius), out);
  }

 private:
  std::vector<FeatureCell> cells_;
  PointOctree<int> octree_{8.0};
};

struct AlignmentParams {
  double search_radius = 2.0;      // correspondence box half-width, meters
  double huber_delta = 0.5;        // robust loss threshold, meters
  int max_iterations = 50;
  double damping_init = 1e-4;
  double update_tolerance = 1e-6;  // pose update norm for convergence
  double accept_distance = 0.1;    // acceptance gate on the mean residual
  int min_feature_cells = 10;
  bool record_correspondences = false;  // keep the final pairing for debug dumps
};

/// Final pairing of one source cell with its target, for debug dumps.
struct CorrespondenceRecord {
  int source_index = -1;
  int target_index = -1;
  CellShape shape = CellShape::None;
  double residual = 0.0;  // point-to-plane or point-to-line distance, >= 0
};

struct AlignmentResult {
  RigidTransform relative_pose;  // maps source frame into target frame
  double mean_residual = std::numeric_limits<double>::infinity();
  double mean_cost = std::numeric_limits<double>::infinity();
  double inlier_fraction = 0.0;  // correspondences within the robust-loss band
  int iterations = 0;
  int correspondences = 0;
  int guess_index = -1;
  bool converged = false;
  bool accepted = false;
  std::vector<double> cost_history;  // accepted-step costs, non-increasing
  std::vector<CorrespondenceRecord> correspondence_records;  // when recorded
};

/// Point-to-plane residual of a source cell against a plane target:
/// n_t . (R mu_s + t - mu_t).
inline double plane_residual(const FeatureCell& source, const FeatureCell& target,
                             const RigidTransform& pose) {
  return target.direction.dot(pose.apply(source.mean) - target.mean);
}

/// Jacobian of plane_residual with respect to a right-multiplied twist.
inline Vec6 plane_residual_jacobian(const FeatureCell& source, const FeatureCell& target,
                                    const RigidTransform& pose) {
  Vec6 j;
  const Eigen::RowVector3d nr = target.direction.transpose() * pose.rotation;
  j.head<3>() = nr.transpose();
  j.tail<3>() = -(nr * skew(source.mean)).transpose();
  return j;
}

/// Point-to-line residual: || (R mu_s + t - mu_t) x d_t ||.
inline double line_residual(const FeatureCell& source, const FeatureCell& target,
                            const RigidTransform& pose) {
  return (pose.apply(source.mean) - target.mean).cross(target.direction).norm();
}

inline Vec6 line_residual_jacobian(const FeatureCell& source, const FeatureCell& target,
                                   const RigidTransform& pose) {
  const Vec3 v = pose.apply(source.mean) - target.mean;
  const Vec3 c = v.cross(target.direction);
  const double r = c.norm();
  Vec6 j = Vec6::Zero();
  if (r < 1e-12) return j;  // residual already zero; direction undefined
  // dr/dv = (c/r)^T * (-[d]x); dv/d(rho) = R; dv/d(omega) = -R [mu_s]x.
  const Eigen::RowVector3d drdv = (c / r).transpose() * (-skew(target.direction));
  j.head<3>() = (drdv * pose.rotation).transpose();
  j.tail<3>() = -(drdv * pose.rotation * skew(source.mean)).transpose();
  return j;
}

namespace detail {

inline double huber_cost(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

inline double huber_weight(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? 1.0 : delta / a;
}

struct Matches {
  std::vector<int> target_of;  // per source cell; -1 when unmatched
  int count = 0;
};

// Nearest same-shape target (by mean distance) within the search box.
// The previous match stays available as a fallback candidate, so a source
// cell never loses its correspondence while the pose refines.
inline void associate(std::span<const FeatureCell> source, const AlignmentTarget& target,
                      const RigidTransform& pose, double radius, Matches& matches,
                      std::vector<int>& scratch) {
  matches.target_of.assign(source.size(), -1);
  matches.count = 0;
  static thread_local std::vector<int> box;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const FeatureCell& s = source[i];
    const Vec3 p = pose.apply(s.mean);
    target.collect_in_box(p, radius, box);
    const int previous = (i < scratch.size()) ? scratch[i] : -1;
    if (previous >= 0) box.push_back(previous);
    double best = std::numeric_limits<double>::infinity();
    int best_idx = -1;
    for (const int t : box) {
      const FeatureCell& cand = target.cells()[static_cast<std::size_t>(t)];
      if (cand.shape != s.shape) continue;
      const double d = (cand.mean - p).squaredNorm();
      if (d < best || (d == best && t < best_idx)) {
        best = d;
        best_idx = t;
      }
    }
    matches.target_of[i] = best_idx;
    if (best_idx >= 0) ++matches.count;
  }
  scratch = matches.target_of;
}

inline double evaluate_cost(std::span<const FeatureCell> source, const AlignmentTarget& target,
                            const Matches& matches, const RigidTransform& pose, double delta) {
  double cost = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int t = matches.target_of[i];
    if (t < 0) continue;
    const FeatureCell& cand = target.cells()[static_cast<std::size_t>(t)];
    const double r = (source[i].shape == CellShape::Plane)
                         ? plane_residual(source[i], cand, pose)
                         : line_residual(source[i], cand, pose);
    cost += huber_cost(r, delta);
  }
  return cost;
}

}  // namespace detail

/// Damped Gauss-Newton registration of source feature cells against a
/// target region from one initial guess. Returns nullopt when no
/// correspondences are found.
inline std::optional<AlignmentResult> align_single(std::span<const FeatureCell> source,
                                                   const AlignmentTarget& target,
                                                   const RigidTransform& guess,
                                                   const AlignmentParams& params) {
  RigidTransform pose = guess;
  double lambda = params.damping_init;
  detail::Matches matches;
  std::vector<int> previous;
  AlignmentResult result;

  detail::associate(source, target, pose, params.search_radius, matches, previous);
  if (matches.count == 0) return std::nullopt;
  double cost = detail::evaluate_cost(source, target, matches, pose, params.huber_delta);
  result.cost_history.push_back(cost);

  int iter = 0;
  for (; iter < params.max_iterations; ++iter) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
      const int t = matches.target_of[i];
      if (t < 0) continue;
      const FeatureCell& cand = target.cells()[static_cast<std::size_t>(t)];
      double r;
      Vec6 j;
      if (source[i].shape == CellShape::Plane) {
        r = plane_residual(source[i], cand, pose);
        j = plane_residual_jacobian(source[i], cand, pose);
      } else {
        r = line_residual(source[i], cand, pose);
        j = line_residual_jacobian(source[i], cand, pose);
      }
      const double w = detail::huber_weight(r, params.huber_delta);
      h.noalias() += w * j * j.transpose();
      g.noalias() += w * j * r;
    }
    const Vec6 delta = (h + lambda * Mat6::Identity()).ldlt().solve(-g);
    if (!delta.allFinite()) break;
    if (delta.norm() < params.update_tolerance) {
      result.converged = true;
      break;
    }
    const RigidTransform candidate = compose(pose, se3_exp(delta));
    const double candidate_cost =
        detail::evaluate_cost(source, target, matches, candidate, params.huber_delta);
    if (candidate_cost < cost) {
      // Improvement of the accepted step, measured on its own match set;
      // re-association below may legitimately grow the matched set and the
      // total cost with it.
      const double step_decrease = cost - candidate_cost;
      pose = candidate;
      cost = candidate_cost;
      lambda *= 0.1;
      result.cost_history.push_back(cost);
      // Re-associate at the accepted pose; previous matches stay candidates.
      detail::associate(source, target, pose, params.search_radius, matches, previous);
      if (matches.count == 0) break;
      cost = detail::evaluate_cost(source, target, matches, pose, params.huber_delta);
      if (cost < result.cost_history.back()) result.cost_history.back() = cost;
      if (step_decrease <= 1e-10 * std::max(1.0, candidate_cost)) {
        result.converged = true;
        ++iter;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e10) break;
    }
  }

  if (iter >= params.max_iterations) result.converged = true;  // per contract

  if (matches.count == 0) return std::nullopt;
  // The acceptance residual averages the correspondences that lie on their
  // matched feature; pairs beyond the inlier band are overlap boundary
  // artifacts without a true counterpart and carry no fit information.
  const double inlier_band = std::min(params.huber_delta, 3.0 * params.accept_distance);
  double abs_sum = 0.0;
  int inliers = 0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const int t = matches.target_of[i];
    if (t < 0) continue;
    const FeatureCell& cand = target.cells()[static_cast<std::size_t>(t)];
    const double r = (source[i].shape == CellShape::Plane)
                         ? plane_residual(source[i], cand, pose)
                         : line_residual(source[i], cand, pose);
    if (std::abs(r) <= inlier_band) {
      abs_sum += std::abs(r);
      ++inliers;
    }
    if (params.record_correspondences) {
      result.correspondence_records.push_back(
          {static_cast<int>(i), t, source[i].shape, std::abs(r)});
    }
  }
  result.relative_pose = pose;
  result.iterations = iter;
  result.correspondences = matches.count;
  result.inlier_fraction = static_cast<double>(inliers) / matches.count;
  result.mean_residual =
      inliers > 0 ? abs_sum / inliers : std::numeric_limits<double>::infinity();
  result.mean_cost = cost / matches.count;
  result.accepted = result.converged && result.inlier_fraction >= 0.75 &&
                    result.mean_residual < params.accept_distance;
  return result;
}

/// Runs one damped Gauss-Newton per initial guess and returns the result
/// with the lowest mean cost (ties broken by guess order). Returns nullopt
/// when no guess finds any correspondence.
inline std::optional<AlignmentResult> align(std::span<const FeatureCell> source,
                                            const AlignmentTarget& target,
                                            std::span<const RigidTransform> initial_guesses,
                                            const AlignmentParams& params = {}) {
  if (static_cast<int>(source.size()) < params.min_feature_cells) {
    throw std::invalid_argument("align: too few source feature cells");
  }
  if (target.empty()) throw std::invalid_argument("align: empty target region");
  if (initial_guesses.empty()) throw std::invalid_argument("align: no initial guesses");

  std::optional<AlignmentResult> best;
  const auto better = [](const AlignmentResult& a, const AlignmentResult& b) {
    if (a.converged != b.converged) return a.converged;  // completed runs first
    return a.mean_cost < b.mean_cost;
  };
  for (std::size_t k = 0; k < initial_guesses.size(); ++k) {
    require_valid_transform(initial_guesses[k], "align");
    std::optional<AlignmentResult> r = align_single(source, target, initial_guesses[k], params);
    if (!r) continue;
    r->guess_index = static_cast<int>(k);
    if (!best || better(*r, *best)) best = std::move(r);
  }
  return best;
}

/// Up to five initial guesses: identity, then the sign-group members of
/// target_rotation^T * source_rotation composed with the translation that
/// aligns the feature centroids. Degenerate (weakly invariant) keyframes
/// fall back to identity plus the centroid translation.
inline std::vector<RigidTransform> initial_alignment_guesses(
    const Mat3& source_rotation, bool source_weak, const Vec3& source_centroid,
    const Mat3& target_rotation, bool target_weak, const Vec3& target_centroid) {
  std::vector<RigidTransform> guesses;
  guesses.push_back(RigidTransform::identity());
  if (source_weak || target_weak) {
    RigidTransform t;
    t.translation = target_centroid - source_centroid;
    guesses.push_back(t);
    return guesses;
  }
  for (const Vec3& signs :
       {Vec3(1, 1, 1), Vec3(1, -1, -1), Vec3(-1, 1, -1), Vec3(-1, -1, 1)}) {
    RigidTransform g;
    g.rotation = target_rotation.transpose() * signs.asDiagonal() * source_rotation;
    g.translation = target_centroid - g.rotation * source_centroid;
    guesses.push_back(g);
  }
  return guesses;
}

/// CSV dump of an alignment's final correspondences and residuals.
inline void write_correspondence_csv(std::ostream& os, const AlignmentResult& result) {
  os << "source_index,target_index,shape,residual\n";
  char buf[96];
  for (const CorrespondenceRecord& c : result.correspondence_records) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.9g\n", c.source_index, c.target_index,
                  to_string(c.shape), c.residual);
    os << buf;
  }
}

}  // namespace loopclose
