#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "loopclose/descriptor.hpp"
#include "loopclose/histogram.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

/// Normalized cross-correlation of two histograms: the mean-centered,
/// variance-normalized inner product. Returns nullopt when either histogram
/// is constant (zero variance); callers treat that as "no match".
inline std::optional<double> similarity(const Histogram2D& h1, const Histogram2D& h2) {
  constexpr int n = Histogram2D::kBins * Histogram2D::kBins;
  const auto& a = h1.data();
  const auto& b = h2.data();
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
      throw std::invalid_argument("similarity: non-finite histogram entry");
    }
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cross = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (int i = 0; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cross += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) return std::nullopt;
  return cross / std::sqrt(var_a * var_b);
}

/// A keyframe pair whose plane and line similarities both exceed their
/// thresholds.
struct LoopCandidate {
  std::int64_t query_id = 0;
  std::int64_t match_id = 0;
  double sim_plane = 0.0;
  double sim_line = 0.0;
};

/// Ordered store of keyframe descriptors. The most recent
/// `temporal_exclusion` keyframes are excluded from matching: a candidate
/// must satisfy match_id < query_id - temporal_exclusion.
class KeyframeDatabase {
 public:
  struct Entry {
    std::int64_t id = 0;
    Histogram2D hist_plane;
    Histogram2D hist_line;
    RigidTransform reference_pose;
  };

  explicit KeyframeDatabase(int temporal_exclusion = 5)
      : temporal_exclusion_(temporal_exclusion) {}

  std::size_t size() const { return entries_.size(); }
  int temporal_exclusion() const { return temporal_exclusion_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void insert(const Keyframe& kf) {
    if (!entries_.empty() && kf.id <= entries_.back().id) {
      throw std::invalid_argument("KeyframeDatabase::insert: id must be increasing");
    }
    entries_.push_back({kf.id, kf.hist_plane, kf.hist_line, kf.reference_pose});
  }

  /// Similarity of the query against every eligible entry; returns the
  /// candidates passing both thresholds, sorted by sim_plane descending
  /// (ties by id ascending). Entries with undefined similarity are skipped.
  std::vector<LoopCandidate> query(const Keyframe& kf, double plane_thresh,
                                   double line_thresh) const {
    std::vector<LoopCandidate> out;
    for (const Entry& e : entries_) {
      if (e.id >= kf.id - temporal_exclusion_) break;  // ids are increasing
      const std::optional<double> sp = similarity(kf.hist_plane, e.hist_plane);
      if (!sp || *sp < plane_thresh) continue;
      const std::optional<double> sl = similarity(kf.hist_line, e.hist_line);
      if (!sl || *sl < line_thresh) continue;
      out.push_back({kf.id, e.id, *sp, *sl});
    }
    std::stable_sort(out.begin(), out.end(), [](const LoopCandidate& a, const LoopCandidate& b) {
      if (a.sim_plane != b.sim_plane) return a.sim_plane > b.sim_plane;
      return a.match_id < b.match_id;
    });
    return out;
  }

 private:
  int temporal_exclusion_;
  std::vector<Entry> entries_;
};

}  // namespace loopclose
