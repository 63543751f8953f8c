#pragma once

#include <Eigen/Cholesky>

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "loopclose/alignment.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

enum class EdgeKind { Odometry, Loop };

struct PoseNode {
  std::int64_t keyframe_id = 0;
  RigidTransform pose;  // world frame
};

struct PoseEdge {
  std::int64_t from_id = 0;
  std::int64_t to_id = 0;
  RigidTransform measurement;  // relative pose, from -> to
  Mat6 information = Mat6::Identity();
  EdgeKind kind = EdgeKind::Odometry;
};

struct OptimizeReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
  std::vector<double> cost_history;  // accepted-step costs, non-increasing
};

/// Residual of an edge at the given endpoint poses:
/// log(meas^-1 * pose_from^-1 * pose_to).
inline Vec6 edge_residual(const PoseEdge& edge, const RigidTransform& pose_from,
                          const RigidTransform& pose_to) {
  return se3_log(compose(edge.measurement.inverse(), compose(pose_from.inverse(), pose_to)));
}

/// Jacobians of edge_residual with respect to right-multiplied twists on
/// both endpoints.
inline void edge_jacobians(const PoseEdge& edge, const RigidTransform& pose_from,
                           const RigidTransform& pose_to, Vec6& residual, Mat6& j_from,
                           Mat6& j_to) {
  residual = edge_residual(edge, pose_from, pose_to);
  const Mat6 jr_inv = se3_right_jacobian_inv(residual);
  j_to = jr_inv;
  j_from = -jr_inv * se3_adjoint(compose(pose_to.inverse(), pose_from));
}

/// Keyframe poses connected by odometry and loop constraints, optimized by
/// damped Gauss-Newton with the first node held fixed (gauge).
class PoseGraph {
 public:
  void add_node(std::int64_t keyframe_id, const RigidTransform& pose) {
    require_valid_transform(pose, "PoseGraph::add_node");
    if (!nodes_.empty() && keyframe_id <= nodes_.back().keyframe_id) {
      throw std::invalid_argument("PoseGraph::add_node: ids must be increasing");
    }
    index_of_[keyframe_id] = nodes_.size();
    nodes_.push_back({keyframe_id, pose});
  }

  const std::vector<PoseNode>& nodes() const { return nodes_; }
  const std::vector<PoseEdge>& edges() const { return edges_; }

  const RigidTransform& pose_of(std::int64_t keyframe_id) const {
    return nodes_[checked_index(keyframe_id)].pose;
  }

  void set_pose(std::int64_t keyframe_id, const RigidTransform& pose) {
    nodes_[checked_index(keyframe_id)].pose = pose;
  }

  /// Odometry edge between consecutive keyframes; the measurement is the
  /// relative pose of the current node estimates.
  void add_odometry_edge(std::int64_t prev_id, std::int64_t next_id) {
    if (next_id != prev_id + 1) {
      throw std::invalid_argument("add_odometry_edge: ids must be consecutive");
    }
    PoseEdge e;
    e.from_id = prev_id;
    e.to_id = next_id;
    e.measurement = compose(pose_of(prev_id).inverse(), pose_of(next_id));
    e.kind = EdgeKind::Odometry;
    edges_.push_back(e);
  }

  /// Loop edge from an accepted alignment. The alignment maps the query
  /// keyframe into the matched region, so the measurement is
  /// pose_match^-1 * T_align * pose_query. The translation block of the
  /// information is scaled by (accept_distance / mean_residual)^2.
  void add_loop_edge(const AlignmentResult& result, std::int64_t query_id,
                     std::int64_t match_id, double accept_distance = 0.1) {
    if (!result.accepted) {
      throw std::invalid_argument("add_loop_edge: alignment was not accepted");
    }
    PoseEdge e;
    e.from_id = match_id;
    e.to_id = query_id;
    e.measurement = compose(pose_of(match_id).inverse(),
                            compose(result.relative_pose, pose_of(query_id)));
    const double s = accept_distance / std::max(result.mean_residual, 1e-3);
    e.information.topLeftCorner<3, 3>() *= s * s;
    e.kind = EdgeKind::Loop;
    edges_.push_back(e);
  }

  double total_cost() const {
    double cost = 0.0;
    for (const PoseEdge& e : edges_) {
      const Vec6 r = edge_residual(e, pose_of(e.from_id), pose_of(e.to_id));
      cost += r.dot(e.information * r);
    }
    return cost;
  }

  /// Damped Gauss-Newton over all poses except node 0. Stops when the cost
  /// decrease falls below the tolerance or max_iterations is reached.
  OptimizeReport optimize(int max_iterations = 100, double tolerance = 1e-12) {
    if (nodes_.empty()) throw std::invalid_argument("optimize: empty graph");
    require_connected();
    const int free = static_cast<int>(nodes_.size()) - 1;  // node 0 fixed
    OptimizeReport report;
    report.initial_cost = total_cost();
    report.final_cost = report.initial_cost;
    if (free == 0 || edges_.empty()) {
      report.converged = true;
      return report;
    }

    double lambda = 1e-8;
    double cost = report.initial_cost;
    report.cost_history.push_back(cost);
    Eigen::MatrixXd h(6 * free, 6 * free);
    Eigen::VectorXd g(6 * free);
    for (int iter = 0; iter < max_iterations; ++iter) {
      h.setZero();
      g.setZero();
      for (const PoseEdge& e : edges_) {
        const std::size_t fi = checked_index(e.from_id);
        const std::size_t ti = checked_index(e.to_id);
        Vec6 r;
        Mat6 jf, jt;
        edge_jacobians(e, nodes_[fi].pose, nodes_[ti].pose, r, jf, jt);
        const Mat6 w = e.information;
        // Block rows/cols of the fixed gauge node are dropped.
        const int bf = static_cast<int>(fi) - 1;
        const int bt = static_cast<int>(ti) - 1;
        if (bf >= 0) {
          h.block<6, 6>(6 * bf, 6 * bf).noalias() += jf.transpose() * w * jf;
          g.segment<6>(6 * bf).noalias() += jf.transpose() * w * r;
        }
        if (bt >= 0) {
          h.block<6, 6>(6 * bt, 6 * bt).noalias() += jt.transpose() * w * jt;
          g.segment<6>(6 * bt).noalias() += jt.transpose() * w * r;
        }
        if (bf >= 0 && bt >= 0) {
          h.block<6, 6>(6 * bf, 6 * bt).noalias() += jf.transpose() * w * jt;
          h.block<6, 6>(6 * bt, 6 * bf).noalias() += jt.transpose() * w * jf;
        }
      }
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      if (!delta.allFinite()) break;

      std::vector<RigidTransform> backup;
      backup.reserve(free);
      for (int i = 1; i <= free; ++i) backup.push_back(nodes_[i].pose);
      for (int i = 1; i <= free; ++i) {
        nodes_[i].pose = compose(nodes_[i].pose, se3_exp(delta.segment<6>(6 * (i - 1))));
      }
      const double candidate = total_cost();
      ++report.iterations;
      if (candidate < cost) {
        const double decrease = cost - candidate;
        cost = candidate;
        report.cost_history.push_back(cost);
        lambda = std::max(lambda * 0.1, 1e-12);
        if (decrease < tolerance) {
          report.converged = true;
          break;
        }
      } else {
        for (int i = 1; i <= free; ++i) nodes_[i].pose = backup[i - 1];
        lambda *= 10.0;
        if (lambda > 1e12) {
          report.converged = true;  // no further progress possible
          break;
        }
      }
    }
    report.final_cost = cost;
    return report;
  }

  /// Per-edge residual norms at the current poses.
  std::vector<double> residual_norms() const {
    std::vector<double> out;
    out.reserve(edges_.size());
    for (const PoseEdge& e : edges_) {
      out.push_back(edge_residual(e, pose_of(e.from_id), pose_of(e.to_id)).norm());
    }
    return out;
  }

 private:
  std::size_t checked_index(std::int64_t keyframe_id) const {
    const auto it = index_of_.find(keyframe_id);
    if (it == index_of_.end()) {
      throw std::invalid_argument("PoseGraph: unknown keyframe id");
    }
    return it->second;
  }

  void require_connected() const {
    std::vector<int> parent(nodes_.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    const auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const PoseEdge& e : edges_) {
      const int a = find(static_cast<int>(checked_index(e.from_id)));
      const int b = find(static_cast<int>(checked_index(e.to_id)));
      if (a != b) parent[a] = b;
    }
    const int root = find(0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (find(static_cast<int>(i)) != root) {
        throw std::invalid_argument("optimize: graph is disconnected");
      }
    }
  }

  std::vector<PoseNode> nodes_;
  std::vector<PoseEdge> edges_;
  std::unordered_map<std::int64_t, std::size_t> index_of_;
};

/// Rigid per-keyframe propagation of an optimization result to frame poses:
/// each frame is left-composed with its keyframe's correction transform.
/// Frames beyond the last keyframe use the last correction.
inline std::vector<RigidTransform> corrected_frame_poses(
    const std::vector<RigidTransform>& pre_opt_keyframe_poses,
    const std::vector<RigidTransform>& post_opt_keyframe_poses,
    const std::vector<std::pair<std::int64_t, std::int64_t>>& keyframe_frame_ranges,
    const std::vector<RigidTransform>& frame_poses) {
  if (pre_opt_keyframe_poses.size() != post_opt_keyframe_poses.size() ||
      pre_opt_keyframe_poses.size() != keyframe_frame_ranges.size()) {
    throw std::invalid_argument("corrected_frame_poses: keyframe array size mismatch");
  }
  if (pre_opt_keyframe_poses.empty()) return frame_poses;
  std::vector<RigidTransform> corrections;
  std::vector<bool> unchanged;
  corrections.reserve(pre_opt_keyframe_poses.size());
  for (std::size_t k = 0; k < pre_opt_keyframe_poses.size(); ++k) {
    const RigidTransform& a = pre_opt_keyframe_poses[k];
    const RigidTransform& b = post_opt_keyframe_poses[k];
    // A keyframe the optimizer did not move passes frames through untouched.
    unchanged.push_back((a.rotation.array() == b.rotation.array()).all() &&
                        (a.translation.array() == b.translation.array()).all());
    corrections.push_back(compose(b, a.inverse()));
  }
  std::vector<RigidTransform> out;
  out.reserve(frame_poses.size());
  std::size_t k = 0;
  for (std::size_t f = 0; f < frame_poses.size(); ++f) {
    while (k + 1 < keyframe_frame_ranges.size() &&
           static_cast<std::int64_t>(f) > keyframe_frame_ranges[k].second) {
      ++k;
    }
    out.push_back(unchanged[k] ? frame_poses[f] : compose(corrections[k], frame_poses[f]));
  }
  return out;
}

/// g2o text dump (VERTEX_SE3:QUAT / EDGE_SE3:QUAT) for external viewers.
inline void write_g2o(std::ostream& os, const PoseGraph& graph) {
  char buf[512];
  const auto quat_of = [](const RigidTransform& t) { return Eigen::Quaterniond(t.rotation); };
  for (const PoseNode& n : graph.nodes()) {
    Eigen::Quaterniond q = quat_of(n.pose);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    std::snprintf(buf, sizeof(buf), "VERTEX_SE3:QUAT %lld %.12g %.12g %.12g %.12g %.12g %.12g %.12g\n",
                  static_cast<long long>(n.keyframe_id), n.pose.translation.x(),
                  n.pose.translation.y(), n.pose.translation.z(), q.x(), q.y(), q.z(), q.w());
    os << buf;
  }
  for (const PoseEdge& e : graph.edges()) {
    Eigen::Quaterniond q = quat_of(e.measurement);
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    std::snprintf(buf, sizeof(buf), "EDGE_SE3:QUAT %lld %lld %.12g %.12g %.12g %.12g %.12g %.12g %.12g",
                  static_cast<long long>(e.from_id), static_cast<long long>(e.to_id),
                  e.measurement.translation.x(), e.measurement.translation.y(),
                  e.measurement.translation.z(), q.x(), q.y(), q.z(), q.w());
    os << buf;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) {
        std::snprintf(buf, sizeof(buf), " %.12g", e.information(r, c));
        os << buf;
      }
    }
    os << '\n';
  }
}

}  // namespace loopclose
