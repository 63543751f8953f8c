#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loopclose/alignment.hpp"
#include "loopclose/cell_map.hpp"
#include "loopclose/config.hpp"
#include "loopclose/descriptor.hpp"
#include "loopclose/io.hpp"
#include "loopclose/loop_database.hpp"
#include "loopclose/pose_graph.hpp"
#include "loopclose/synthetic.hpp"

namespace loopclose {

struct LoopRecord {
  std::int64_t query_id = 0;
  std::int64_t match_id = 0;
  double sim_plane = 0.0;
  double sim_line = 0.0;
  bool accepted_by_alignment = false;
};

struct StageTiming {
  double mean_ms = 0.0;
  double p99_ms = 0.0;
  std::int64_t count = 0;
};

class StageProfile {
 public:
  void add(const std::string& stage, double ms) { samples_[stage].push_back(ms); }

  std::map<std::string, StageTiming> summary() const {
    std::map<std::string, StageTiming> out;
    for (const auto& [stage, values] : samples_) {
      std::vector<double> sorted = values;
      std::sort(sorted.begin(), sorted.end());
      StageTiming t;
      t.count = static_cast<std::int64_t>(sorted.size());
      double sum = 0.0;
      for (double v : sorted) sum += v;
      t.mean_ms = sorted.empty() ? 0.0 : sum / sorted.size();
      if (!sorted.empty()) {
        const std::size_t idx =
            std::min(sorted.size() - 1, static_cast<std::size_t>(0.99 * sorted.size()));
        t.p99_ms = sorted[idx];
      }
      out[stage] = t;
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<double>> samples_;
};

class StopwatchMs {
 public:
  StopwatchMs() : start_(std::chrono::steady_clock::now()) {}
  double elapsed() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

struct RunReport {
  std::vector<double> timestamps;
  std::vector<RigidTransform> trajectory_before;  // input odometry
  std::vector<RigidTransform> trajectory_after;   // corrected per-frame poses
  std::vector<LoopRecord> loops;
  std::vector<Keyframe> keyframes;
  std::map<std::string, StageTiming> timing;
  std::uint64_t skipped_points = 0;
  int accepted_loops = 0;
  int optimizations = 0;
};

namespace detail {

inline std::vector<FeatureCell> classified_features(const CellMap& map,
                                                    const std::vector<GridIndex>& cells,
                                                    const ClassifyParams& params) {
  std::vector<FeatureCell> out;
  for (const GridIndex& g : cells) {
    const Cell* cell = map.find(g);
    if (!cell) continue;
    const CellFeature f = classify_cell(*cell, params);
    if (f.shape == CellShape::None) continue;
    out.push_back({cell->mean, f.direction, f.shape});
  }
  return out;
}

}  // namespace detail

/// End-to-end engine: frame registration, keyframe assembly and
/// description, loop detection, map alignment, pose-graph correction and
/// map rebuild. Deterministic for a fixed config and dataset.
class Engine {
 public:
  explicit Engine(const Config& config)
      : config_(config), map_(config.cell_size), database_(config.temporal_exclusion) {
    config_.validate();
  }

  RunReport run(const Dataset& dataset) {
    if (!frame_poses_.empty()) {
      throw std::logic_error("Engine::run: engine already consumed; construct a fresh one");
    }
    dataset.validate();
    const std::size_t n_frames = dataset.frames.size();
    frame_poses_.reserve(n_frames);

    std::vector<GridIndex> keyframe_cells;
    for (std::size_t f = 0; f < n_frames; ++f) {
      const RigidTransform pose_in = dataset.trajectory[f];
      const RigidTransform pose = corrected_ ? compose(world_correction_, pose_in) : pose_in;
      frame_poses_.push_back(pose);
      {
        const StopwatchMs timer;
        std::vector<GridIndex> touched = map_.register_frame(dataset.frames[f], pose);
        profile_.add("registration", timer.elapsed());
        keyframe_cells.insert(keyframe_cells.end(), touched.begin(), touched.end());
      }
      if ((f + 1) % static_cast<std::size_t>(config_.keyframe_size) == 0) {
        std::sort(keyframe_cells.begin(), keyframe_cells.end());
        keyframe_cells.erase(std::unique(keyframe_cells.begin(), keyframe_cells.end()),
                             keyframe_cells.end());
        process_keyframe(static_cast<std::int64_t>(f) + 1 - config_.keyframe_size,
                         static_cast<std::int64_t>(f), std::move(keyframe_cells));
        keyframe_cells.clear();
      }
    }
    // A final partial keyframe is discarded.

    RunReport report;
    report.timestamps = dataset.timestamps;
    report.trajectory_before = dataset.trajectory;
    report.trajectory_after = frame_poses_;
    report.loops = loops_;
    report.keyframes = keyframes_;
    report.timing = profile_.summary();
    report.skipped_points = map_.skipped_points();
    report.accepted_loops = accepted_loops_;
    report.optimizations = optimizations_;
    return report;
  }

  const CellMap& map() const { return map_; }
  const PoseGraph& graph() const { return graph_; }
  const std::vector<RigidTransform>& frame_poses() const { return frame_poses_; }

 private:
  void process_keyframe(std::int64_t first_frame, std::int64_t last_frame,
                        std::vector<GridIndex> cells) {
    Keyframe kf;
    kf.id = static_cast<std::int64_t>(keyframes_.size());
    kf.first_frame = first_frame;
    kf.last_frame = last_frame;
    kf.cells = std::move(cells);
    kf.reference_pose = frame_poses_[static_cast<std::size_t>(first_frame)];

    // Classification (feature type and direction per cell).
    std::vector<const Cell*> classified;
    std::vector<Vec3> plane_directions;
    for (const GridIndex& g : kf.cells) {
      Cell* cell = map_.find(g);
      const CellFeature f = classify_cell(*cell, config_.classify_params());
      cell->shape = f.shape;
      cell->feature_direction = f.direction;
      if (f.shape != CellShape::None) classified.push_back(cell);
      if (f.shape == CellShape::Plane) plane_directions.push_back(f.direction);
    }

    // Canonical rotation and the two 2D histograms.
    {
      const StopwatchMs timer;
      const auto rotation = canonical_rotation(plane_directions);
      kf.weak_invariance = !rotation.has_value();
      kf.canonical_rotation = rotation.value_or(Mat3::Identity());
      auto [hp, hl] = build_histograms(classified, kf.canonical_rotation,
                                       {config_.blur_sigma});
      kf.hist_plane = hp;
      kf.hist_line = hl;
      profile_.add("histogram", timer.elapsed());
    }

    // Loop detection against the database, then insertion.
    std::vector<LoopCandidate> candidates;
    {
      const StopwatchMs timer;
      candidates = database_.query(kf, config_.plane_threshold, config_.line_threshold);
      const double elapsed = timer.elapsed();
      const std::int64_t eligible =
          std::max<std::int64_t>(0, static_cast<std::int64_t>(database_.size()) -
                                        config_.temporal_exclusion);
      if (eligible > 0) profile_.add("similarity", elapsed / static_cast<double>(eligible));
    }
    database_.insert(kf);

    graph_.add_node(kf.id, kf.reference_pose);
    if (kf.id > 0) graph_.add_odometry_edge(kf.id - 1, kf.id);

    keyframes_.push_back(kf);

    for (const LoopCandidate& c : candidates) {
      loops_.push_back({c.query_id, c.match_id, c.sim_plane, c.sim_line, false});
    }
    if (candidates.empty()) return;

    // Only the best candidate is forwarded to alignment.
    const LoopCandidate best = candidates.front();
    const Keyframe& query = keyframes_.back();
    const Keyframe& match = keyframes_[static_cast<std::size_t>(best.match_id)];
    const auto source = detail::classified_features(map_, query.cells, config_.classify_params());
    const auto target_cells =
        detail::classified_features(map_, match.cells, config_.classify_params());
    if (static_cast<int>(source.size()) < config_.min_feature_cells || target_cells.empty()) {
      return;
    }
    const AlignmentTarget target(target_cells);
    const auto guesses = initial_alignment_guesses(
        query.canonical_rotation, query.weak_invariance, feature_centroid(source),
        match.canonical_rotation, match.weak_invariance, feature_centroid(target_cells));

    std::optional<AlignmentResult> result;
    {
      const StopwatchMs timer;
      result = align(source, target, guesses, config_.alignment_params());
      profile_.add("alignment", timer.elapsed());
    }
    if (!result || !result->accepted) return;

    for (LoopRecord& r : loops_) {
      if (r.query_id == best.query_id && r.match_id == best.match_id) {
        r.accepted_by_alignment = true;
      }
    }
    ++accepted_loops_;
    graph_.add_loop_edge(*result, best.query_id, best.match_id, config_.accept_distance);
    optimize_and_rebuild();
  }

  void optimize_and_rebuild() {
    std::vector<RigidTransform> pre;
    for (const PoseNode& n : graph_.nodes()) pre.push_back(n.pose);

    {
      const StopwatchMs timer;
      graph_.optimize(config_.graph_max_iterations, config_.graph_tolerance);
      profile_.add("optimize", timer.elapsed());
    }
    ++optimizations_;

    std::vector<RigidTransform> post;
    for (const PoseNode& n : graph_.nodes()) post.push_back(n.pose);

    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
    for (const Keyframe& kf : keyframes_) ranges.emplace_back(kf.first_frame, kf.last_frame);

    frame_poses_ = corrected_frame_poses(pre, post, ranges, frame_poses_);

    std::vector<std::vector<GridIndex>> per_frame_touched;
    {
      const StopwatchMs timer;
      map_ = map_.rebuild(frame_poses_, &per_frame_touched);
      profile_.add("rebuild", timer.elapsed());
    }

    // Refresh keyframe cell sets and reference poses from the rebuilt map.
    for (Keyframe& kf : keyframes_) {
      std::vector<GridIndex> cells;
      for (std::int64_t f = kf.first_frame; f <= kf.last_frame; ++f) {
        const auto& touched = per_frame_touched[static_cast<std::size_t>(f)];
        cells.insert(cells.end(), touched.begin(), touched.end());
      }
      std::sort(cells.begin(), cells.end());
      cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
      kf.cells = std::move(cells);
      kf.reference_pose = frame_poses_[static_cast<std::size_t>(kf.first_frame)];
      graph_.set_pose(kf.id, kf.reference_pose);
    }

    // Future odometry inputs are re-anchored by the latest correction.
    const std::size_t last = keyframes_.size() - 1;
    const RigidTransform latest = compose(post[last], pre[last].inverse());
    world_correction_ = corrected_ ? compose(latest, world_correction_) : latest;
    corrected_ = true;
  }

  Config config_;
  CellMap map_;
  KeyframeDatabase database_;
  PoseGraph graph_;
  std::vector<Keyframe> keyframes_;
  std::vector<RigidTransform> frame_poses_;
  std::vector<LoopRecord> loops_;
  StageProfile profile_;
  RigidTransform world_correction_;
  bool corrected_ = false;
  int accepted_loops_ = 0;
  int optimizations_ = 0;
};

inline RunReport run_pipeline(const Config& config, const Dataset& dataset) {
  Engine engine(config);
  return engine.run(dataset);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Metrics {
  double endpoint_error_before = 0.0;
  double endpoint_error_after = 0.0;
  double ate_rmse_before = 0.0;
  double ate_rmse_after = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  int ground_truth_pairs = 0;
  int detected_pairs = 0;
  int true_positive_pairs = 0;
};

/// Metrics against ground truth. Revisit ground truth: keyframe pairs whose
/// true reference positions are within 2x the largest cell size, outside
/// the temporal exclusion window.
inline Metrics evaluate(const RunReport& report, const std::vector<RigidTransform>& ground_truth,
                        const Config& config) {
  if (ground_truth.size() != report.trajectory_before.size() ||
      ground_truth.size() != report.trajectory_after.size()) {
    throw std::invalid_argument("evaluate: ground truth length mismatch");
  }
  Metrics m;
  const std::size_t n = ground_truth.size();
  m.endpoint_error_before =
      (report.trajectory_before.back().translation - ground_truth.back().translation).norm();
  m.endpoint_error_after =
      (report.trajectory_after.back().translation - ground_truth.back().translation).norm();
  double sum_before = 0.0;
  double sum_after = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_before +=
        (report.trajectory_before[i].translation - ground_truth[i].translation).squaredNorm();
    sum_after +=
        (report.trajectory_after[i].translation - ground_truth[i].translation).squaredNorm();
  }
  m.ate_rmse_before = std::sqrt(sum_before / n);
  m.ate_rmse_after = std::sqrt(sum_after / n);

  const double radius = 2.0 * config.cell_size.maxCoeff();
  std::vector<std::pair<std::int64_t, std::int64_t>> gt_pairs;
  for (std::size_t i = 0; i < report.keyframes.size(); ++i) {
    for (std::size_t j = 0; j + config.temporal_exclusion < i; ++j) {
      const auto& a = report.keyframes[i];
      const auto& b = report.keyframes[j];
      const Vec3 pa = ground_truth[static_cast<std::size_t>(a.first_frame)].translation;
      const Vec3 pb = ground_truth[static_cast<std::size_t>(b.first_frame)].translation;
      if ((pa - pb).norm() <= radius) gt_pairs.emplace_back(a.id, b.id);
    }
  }
  m.ground_truth_pairs = static_cast<int>(gt_pairs.size());
  m.detected_pairs = static_cast<int>(report.loops.size());
  for (const LoopRecord& r : report.loops) {
    const bool hit = std::find(gt_pairs.begin(), gt_pairs.end(),
                               std::make_pair(r.query_id, r.match_id)) != gt_pairs.end();
    if (hit) ++m.true_positive_pairs;
  }
  m.precision = report.loops.empty()
                    ? 0.0
                    : static_cast<double>(m.true_positive_pairs) / report.loops.size();
  m.recall = gt_pairs.empty() ? 0.0
                              : static_cast<double>(m.true_positive_pairs) / gt_pairs.size();
  return m;
}

// ---------------------------------------------------------------------------
// Report output files
// ---------------------------------------------------------------------------

inline void write_loops_csv(std::ostream& os, const std::vector<LoopRecord>& loops) {
  os << "query_id,match_id,sim_plane,sim_line,accepted_by_alignment\n";
  char buf[160];
  for (const LoopRecord& r : loops) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.12g,%.12g,%d\n",
                  static_cast<long long>(r.query_id), static_cast<long long>(r.match_id),
                  r.sim_plane, r.sim_line, r.accepted_by_alignment ? 1 : 0);
    os << buf;
  }
}

inline void write_timing_csv(std::ostream& os, const std::map<std::string, StageTiming>& timing) {
  os << "stage,mean_ms,p99_ms,count\n";
  char buf[160];
  for (const auto& [stage, t] : timing) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%.6g,%lld\n", stage.c_str(), t.mean_ms, t.p99_ms,
                  static_cast<long long>(t.count));
    os << buf;
  }
}

inline void write_keyframes_csv(std::ostream& os, const std::vector<Keyframe>& keyframes) {
  os << "id,first_frame,last_frame,cells,weak_invariance,ref_x,ref_y,ref_z\n";
  char buf[256];
  for (const Keyframe& kf : keyframes) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%lld,%zu,%d,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(kf.id), static_cast<long long>(kf.first_frame),
                  static_cast<long long>(kf.last_frame), kf.cells.size(),
                  kf.weak_invariance ? 1 : 0, kf.reference_pose.translation.x(),
                  kf.reference_pose.translation.y(), kf.reference_pose.translation.z());
    os << buf;
  }
}

/// Writes the full report file set into out_dir: trajectories (TUM), the
/// loop report, the maps before/after correction (PLY), per-keyframe
/// histograms and the timing profile.
inline void write_report_files(const std::filesystem::path& out_dir, const RunReport& report,
                               const Engine& engine) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir / "histograms");

  const auto open = [&](const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error(p.string() + ": cannot open for writing");
    return os;
  };

  const auto to_entries = [&](const std::vector<RigidTransform>& poses) {
    std::vector<TrajectoryEntry> entries;
    entries.reserve(poses.size());
    for (std::size_t i = 0; i < poses.size(); ++i) {
      entries.push_back({report.timestamps[i], poses[i]});
    }
    return entries;
  };

  {
    auto os = open(out_dir / "trajectory_before.tum");
    write_tum(os, to_entries(report.trajectory_before));
  }
  {
    auto os = open(out_dir / "trajectory_after.tum");
    write_tum(os, to_entries(report.trajectory_after));
  }
  {
    auto os = open(out_dir / "loops.csv");
    write_loops_csv(os, report.loops);
  }
  {
    auto os = open(out_dir / "timing.csv");
    write_timing_csv(os, report.timing);
  }
  {
    auto os = open(out_dir / "keyframes.csv");
    write_keyframes_csv(os, report.keyframes);
  }
  {
    // The "before" map re-registers the frame log with the uncorrected
    // input trajectory; the "after" map is the engine's current map.
    const CellMap before = engine.map().rebuild(report.trajectory_before);
    auto os = open(out_dir / "map_before.ply");
    write_ply_binary(os, map_points(before));
  }
  {
    auto os = open(out_dir / "map_after.ply");
    write_ply_binary(os, map_points(engine.map()));
  }
  {
    auto os = open(out_dir / "cells.csv");
    write_cell_summary_csv(os, engine.map());
  }
  {
    auto os = open(out_dir / "graph.g2o");
    write_g2o(os, engine.graph());
  }
  for (const Keyframe& kf : report.keyframes) {
    {
      auto os = open(out_dir / "histograms" / (std::to_string(kf.id) + ".csv"));
      write_histogram_csv(os, kf.hist_plane);
    }
    {
      auto os = open(out_dir / "histograms" / (std::to_string(kf.id) + "_line.csv"));
      write_histogram_csv(os, kf.hist_line);
    }
  }
}

/// Loads a dataset from a frames directory (*.ply, *.xyz, *.txt sorted by
/// name) and a TUM trajectory file.
inline Dataset load_dataset(const std::filesystem::path& frames_dir,
                            const std::filesystem::path& trajectory_file,
                            const std::filesystem::path& ground_truth_file = {}) {
  namespace fs = std::filesystem;
  Dataset dataset;
  if (!fs::is_directory(frames_dir)) {
    throw std::runtime_error(frames_dir.string() + ": not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".ply" || ext == ".xyz" || ext == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) dataset.frames.push_back(read_point_cloud(f));

  {
    std::ifstream is(trajectory_file);
    if (!is) throw std::runtime_error(trajectory_file.string() + ": cannot open");
    for (const TrajectoryEntry& e : read_tum(is, trajectory_file)) {
      dataset.timestamps.push_back(e.timestamp);
      dataset.trajectory.push_back(e.pose);
    }
  }
  if (!ground_truth_file.empty()) {
    std::ifstream is(ground_truth_file);
    if (!is) throw std::runtime_error(ground_truth_file.string() + ": cannot open");
    for (const TrajectoryEntry& e : read_tum(is, ground_truth_file)) {
      dataset.ground_truth.push_back(e.pose);
    }
  }
  dataset.validate();
  return dataset;
}

/// Writes a dataset as run() inputs consume them: frames/NNNNNN.ply plus
/// TUM trajectory and ground-truth files.
inline void write_dataset(const std::filesystem::path& out_dir, const Dataset& dataset) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "frames");
  char name[32];
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.ply", i);
    std::ofstream os(out_dir / "frames" / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write frame file");
    write_ply_binary(os, dataset.frames[i]);
  }
  const auto dump = [&](const fs::path& p, const std::vector<RigidTransform>& poses) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error(p.string() + ": cannot open for writing");
    std::vector<TrajectoryEntry> entries;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      entries.push_back({dataset.timestamps[i], poses[i]});
    }
    write_tum(os, entries);
  };
  dump(out_dir / "trajectory.tum", dataset.trajectory);
  if (!dataset.ground_truth.empty()) {
    dump(out_dir / "ground_truth.tum", dataset.ground_truth);
  }
}

}  // namespace loopclose
