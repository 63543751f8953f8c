#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "loopclose/cell.hpp"
#include "loopclose/octree.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

/// One registered input frame: raw points in the sensor frame plus the pose
/// used when it was registered. Retained so the whole map can be rebuilt
/// after a pose-graph correction.
struct FrameRecord {
  std::vector<Vec3> points;
  RigidTransform pose;
};

/// Global map: a hash index from grid coordinates to cells plus an octree
/// over cell centers for range queries. Both indices always hold exactly
/// the same cell set.
class CellMap {
 public:
  explicit CellMap(const Vec3& cell_size = Vec3(1.0, 1.0, 1.0)) : cell_size_(cell_size) {
    if (!(cell_size.minCoeff() > 0.0)) {
      throw std::invalid_argument("CellMap: cell size must be positive");
    }
  }

  const Vec3& cell_size() const { return cell_size_; }
  std::size_t cell_count() const { return cells_.size(); }
  std::size_t frame_count() const { return frames_.size(); }
  const std::vector<FrameRecord>& frame_log() const { return frames_; }
  std::uint64_t skipped_points() const { return skipped_points_; }

  const Cell* find(const GridIndex& g) const {
    const auto it = cells_.find(g);
    return it == cells_.end() ? nullptr : &it->second;
  }

  Cell* find(const GridIndex& g) {
    const auto it = cells_.find(g);
    return it == cells_.end() ? nullptr : &it->second;
  }

  /// Registers a frame: transforms each point by the pose, routes it to its
  /// cell (creating cells in both indices as needed) and updates the cell
  /// statistics. Non-finite points are skipped and counted. Returns the
  /// sorted set of grid indices touched.
  std::vector<GridIndex> register_frame(const std::vector<Vec3>& frame,
                                        const RigidTransform& pose) {
    require_valid_transform(pose, "register_frame");
    if (frame.empty()) throw std::invalid_argument("register_frame: empty frame");
    std::vector<GridIndex> touched = register_points(frame, pose);
    frames_.push_back({frame, pose});
    return touched;
  }

  /// Cells whose centers lie in [lo, hi]. Backed by the octree; order is
  /// deterministic for a fixed map.
  std::vector<const Cell*> cells_in_box(const Vec3& lo, const Vec3& hi) const {
    if ((hi - lo).minCoeff() < 0.0) {
      throw std::invalid_argument("cells_in_box: inverted box");
    }
    std::vector<const Cell*> out;
    for (const GridIndex& g : octree_.query_box(lo, hi)) {
      out.push_back(&cells_.at(g));
    }
    return out;
  }

  /// Fresh map built by re-registering every logged frame with its corrected
  /// pose. Optionally reports the touched cell set per frame.
  CellMap rebuild(const std::vector<RigidTransform>& corrected_poses,
                  std::vector<std::vector<GridIndex>>* per_frame_touched = nullptr) const {
    if (corrected_poses.size() != frames_.size()) {
      throw std::invalid_argument("rebuild: pose count does not match frame log");
    }
    CellMap fresh(cell_size_);
    if (per_frame_touched) per_frame_touched->clear();
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      std::vector<GridIndex> touched = fresh.register_points(frames_[i].points, corrected_poses[i]);
      fresh.frames_.push_back({frames_[i].points, corrected_poses[i]});
      if (per_frame_touched) per_frame_touched->push_back(std::move(touched));
    }
    return fresh;
  }

  template <typename Fn>
  void for_each_cell(Fn&& fn) const {
    // Iterate in octree insertion order: stable and independent of the hash
    // table layout.
    for (const GridIndex& g : insertion_order_) fn(cells_.at(g));
  }

  const std::vector<GridIndex>& insertion_order() const { return insertion_order_; }

 private:
  std::vector<GridIndex> register_points(const std::vector<Vec3>& frame,
                                         const RigidTransform& pose) {
    std::vector<GridIndex> touched;
    touched.reserve(64);
    for (const Vec3& local : frame) {
      if (!local.allFinite()) {
        ++skipped_points_;
        continue;
      }
      const Vec3 p = pose.apply(local);
      if (!p.allFinite()) {
        ++skipped_points_;
        continue;
      }
      const GridIndex g = grid_index_of(p, cell_size_);
      auto [it, inserted] = cells_.try_emplace(g, Cell{});
      if (inserted) {
        it->second = make_cell(g, cell_size_);
        octree_.insert(it->second.center, g);
        insertion_order_.push_back(g);
      }
      update_stats(it->second, p);
      touched.push_back(g);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    return touched;
  }

  Vec3 cell_size_;
  std::unordered_map<GridIndex, Cell, GridIndexHash> cells_;
  CenterOctree octree_{8.0};
  std::vector<GridIndex> insertion_order_;
  std::vector<FrameRecord> frames_;
  std::uint64_t skipped_points_ = 0;
};

}  // namespace loopclose
