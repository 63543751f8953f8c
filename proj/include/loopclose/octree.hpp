#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

#include "loopclose/cell.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

/// Octree over points supporting axis-aligned box queries. Leaves hold up
/// to 8 entries; the root grows by power-of-two expansion when a point
/// falls outside its bounds.
template <typename Payload>
class PointOctree {
 public:
  struct Entry {
    Vec3 point;
    Payload payload;
  };

  static constexpr int kLeafCapacity = 8;
  static constexpr int kMaxDepth = 21;

  explicit PointOctree(double initial_half_extent = 8.0)
      : initial_half_extent_(initial_half_extent) {}

  std::size_t size() const { return size_; }

  void insert(const Vec3& point, const Payload& payload) {
    if (!point.allFinite()) throw std::invalid_argument("PointOctree::insert: non-finite point");
    if (!root_) {
      root_ = std::make_unique<Node>();
      center_ = point;
      half_extent_ = initial_half_extent_;
    }
    int guard = 0;
    while (!inside_root(point)) {
      grow_towards(point);
      if (++guard > 1024) throw std::runtime_error("PointOctree: growth did not converge");
    }
    insert_into(*root_, center_, half_extent_, 0, point, payload);
    ++size_;
  }

  /// Collects the indices of all entries with point in [lo, hi] (inclusive).
  /// Traversal order is fixed, so results are deterministic for a fixed tree.
  void query_box(const Vec3& lo, const Vec3& hi, std::vector<Payload>& out) const {
    if ((hi - lo).minCoeff() < 0.0) {
      throw std::invalid_argument("PointOctree::query_box: inverted box");
    }
    if (root_) query_node(*root_, center_, half_extent_, lo, hi, out);
  }

  std::vector<Payload> query_box(const Vec3& lo, const Vec3& hi) const {
    std::vector<Payload> out;
    query_box(lo, hi, out);
    return out;
  }

 private:
  struct Node {
    std::vector<Entry> entries;                   // leaf payload
    std::array<std::unique_ptr<Node>, 8> children;
    bool is_leaf = true;
  };

  bool inside_root(const Vec3& p) const {
    return (p - center_).cwiseAbs().maxCoeff() <= half_extent_;
  }

  // Re-root into a node of twice the extent whose octant towards the target
  // point contains the old root.
  void grow_towards(const Vec3& p) {
    auto fresh = std::make_unique<Node>();
    fresh->is_leaf = false;
    const Vec3 dir((p.x() >= center_.x()) ? 1.0 : -1.0, (p.y() >= center_.y()) ? 1.0 : -1.0,
                   (p.z() >= center_.z()) ? 1.0 : -1.0);
    const Vec3 new_center = center_ + dir * half_extent_;
    int child = 0;
    if (center_.x() >= new_center.x()) child |= 1;
    if (center_.y() >= new_center.y()) child |= 2;
    if (center_.z() >= new_center.z()) child |= 4;
    fresh->children[child] = std::move(root_);
    root_ = std::move(fresh);
    center_ = new_center;
    half_extent_ *= 2.0;
  }

  static int octant_of(const Vec3& p, const Vec3& center) {
    int child = 0;
    if (p.x() >= center.x()) child |= 1;
    if (p.y() >= center.y()) child |= 2;
    if (p.z() >= center.z()) child |= 4;
    return child;
  }

  static Vec3 child_center(const Vec3& center, double child_half, int child) {
    return center + Vec3((child & 1) ? child_half : -child_half,
                         (child & 2) ? child_half : -child_half,
                         (child & 4) ? child_half : -child_half);
  }

  static void insert_into(Node& node, const Vec3& center, double half, int depth,
                          const Vec3& point, const Payload& payload) {
    if (node.is_leaf) {
      if (static_cast<int>(node.entries.size()) < kLeafCapacity || depth >= kMaxDepth) {
        node.entries.push_back({point, payload});
        return;
      }
      node.is_leaf = false;
      std::vector<Entry> old = std::move(node.entries);
      node.entries.clear();
      for (const Entry& e : old) {
        const int c = octant_of(e.point, center);
        if (!node.children[c]) node.children[c] = std::make_unique<Node>();
        insert_into(*node.children[c], child_center(center, half * 0.5, c), half * 0.5,
                    depth + 1, e.point, e.payload);
      }
    }
    const int c = octant_of(point, center);
    if (!node.children[c]) node.children[c] = std::make_unique<Node>();
    insert_into(*node.children[c], child_center(center, half * 0.5, c), half * 0.5, depth + 1,
                point, payload);
  }

  static void query_node(const Node& node, const Vec3& center, double half, const Vec3& lo,
                         const Vec3& hi, std::vector<Payload>& out) {
    if (node.is_leaf) {
      for (const Entry& e : node.entries) {
        if ((e.point.array() >= lo.array()).all() && (e.point.array() <= hi.array()).all()) {
          out.push_back(e.payload);
        }
      }
      return;
    }
    for (int c = 0; c < 8; ++c) {
      if (!node.children[c]) continue;
      const Vec3 cc = child_center(center, half * 0.5, c);
      // Conservative overlap test against the child bounds.
      bool overlap = true;
      for (int k = 0; k < 3 && overlap; ++k) {
        overlap = (cc[k] - half * 0.5 <= hi[k]) && (cc[k] + half * 0.5 >= lo[k]);
      }
      if (overlap) query_node(*node.children[c], cc, half * 0.5, lo, hi, out);
    }
  }

  double initial_half_extent_;
  std::unique_ptr<Node> root_;
  Vec3 center_ = Vec3::Zero();
  double half_extent_ = 0.0;
  std::size_t size_ = 0;
};

/// Octree over cell centers keyed by grid index.
using CenterOctree = PointOctree<GridIndex>;

}  // namespace loopclose
