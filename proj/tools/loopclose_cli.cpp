#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "loopclose/config.hpp"
#include "loopclose/io.hpp"
#include "loopclose/pipeline.hpp"
#include "loopclose/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigCli {
  std::optional<int> keyframe_size;
  std::optional<double> cell_size;
  std::optional<int> min_points;
  std::optional<double> plane_ratio;
  std::optional<double> line_ratio;
  std::optional<double> blur_sigma;
  std::optional<double> plane_threshold;
  std::optional<double> line_threshold;
  std::optional<int> temporal_exclusion;
  std::optional<double> accept_distance;
  std::optional<double> search_radius;
  std::optional<int> align_max_iterations;
  std::optional<double> align_damping;
  std::optional<double> align_update_tolerance;
  std::optional<double> huber_delta;
  std::optional<int> min_feature_cells;
  std::optional<int> graph_max_iterations;
  std::optional<double> graph_tolerance;
};

void add_config_flags(CLI::App* cmd, ConfigCli& cli) {
  cmd->add_option("--keyframe-size", cli.keyframe_size, "Frames per keyframe");
  cmd->add_option("--cell-size", cli.cell_size, "Cell edge length, meters");
  cmd->add_option("--min-points", cli.min_points, "Minimum points for classification");
  cmd->add_option("--plane-ratio", cli.plane_ratio, "Plane eigenvalue ratio");
  cmd->add_option("--line-ratio", cli.line_ratio, "Line eigenvalue ratio");
  cmd->add_option("--blur-sigma", cli.blur_sigma, "Histogram blur sigma, bins");
  cmd->add_option("--plane-threshold", cli.plane_threshold, "Plane similarity threshold");
  cmd->add_option("--line-threshold", cli.line_threshold, "Line similarity threshold");
  cmd->add_option("--temporal-exclusion", cli.temporal_exclusion,
                  "Recent keyframes excluded from matching");
  cmd->add_option("--accept-distance", cli.accept_distance,
                  "Alignment acceptance gate, meters");
  cmd->add_option("--search-radius", cli.search_radius,
                  "Correspondence search radius (0 = 2x cell size)");
  cmd->add_option("--align-max-iterations", cli.align_max_iterations,
                  "Alignment iteration cap");
  cmd->add_option("--align-damping", cli.align_damping, "Initial alignment damping");
  cmd->add_option("--align-update-tolerance", cli.align_update_tolerance,
                  "Alignment convergence tolerance");
  cmd->add_option("--huber-delta", cli.huber_delta, "Robust loss threshold, meters");
  cmd->add_option("--min-feature-cells", cli.min_feature_cells,
                  "Minimum feature cells for alignment");
  cmd->add_option("--graph-max-iterations", cli.graph_max_iterations,
                  "Pose graph iteration cap");
  cmd->add_option("--graph-tolerance", cli.graph_tolerance, "Pose graph cost tolerance");
}

void apply_config_flags(loopclose::Config& config, const ConfigCli& cli) {
  if (cli.keyframe_size) config.keyframe_size = *cli.keyframe_size;
  if (cli.cell_size) config.cell_size = loopclose::Vec3::Constant(*cli.cell_size);
  if (cli.min_points) config.min_points = *cli.min_points;
  if (cli.plane_ratio) config.plane_ratio = *cli.plane_ratio;
  if (cli.line_ratio) config.line_ratio = *cli.line_ratio;
  if (cli.blur_sigma) config.blur_sigma = *cli.blur_sigma;
  if (cli.plane_threshold) config.plane_threshold = *cli.plane_threshold;
  if (cli.line_threshold) config.line_threshold = *cli.line_threshold;
  if (cli.temporal_exclusion) config.temporal_exclusion = *cli.temporal_exclusion;
  if (cli.accept_distance) config.accept_distance = *cli.accept_distance;
  if (cli.search_radius) config.search_radius = *cli.search_radius;
  if (cli.align_max_iterations) config.align_max_iterations = *cli.align_max_iterations;
  if (cli.align_damping) config.align_damping = *cli.align_damping;
  if (cli.align_update_tolerance) config.align_update_tolerance = *cli.align_update_tolerance;
  if (cli.huber_delta) config.huber_delta = *cli.huber_delta;
  if (cli.min_feature_cells) config.min_feature_cells = *cli.min_feature_cells;
  if (cli.graph_max_iterations) config.graph_max_iterations = *cli.graph_max_iterations;
  if (cli.graph_tolerance) config.graph_tolerance = *cli.graph_tolerance;
}

// Synthetic world spec file: key = value lines plus wall/pole/strut/waypoint
// entries; `preset = square_loop` builds the canned loop world.
loopclose::SynthSpec load_synth_spec(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open spec");
  loopclose::SynthSpec spec;
  loopclose::SquareLoopParams preset;
  bool use_preset = false;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw std::runtime_error("spec: expected 'key = value', got: " + line);
      }
      continue;
    }
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::istringstream vs(line.substr(eq + 1));

    if (key == "preset") {
      std::string name;
      vs >> name;
      if (name != "square_loop") throw std::runtime_error("spec: unknown preset " + name);
      use_preset = true;
    } else if (key == "side") vs >> preset.side;
    else if (key == "width") vs >> preset.width;
    else if (key == "laps") vs >> preset.laps;
    else if (key == "frames_per_side") vs >> preset.frames_per_side;
    else if (key == "frames") vs >> spec.frames;
    else if (key == "points_per_frame") { vs >> spec.points_per_frame; preset.points_per_frame = spec.points_per_frame; }
    else if (key == "sensor_range") { vs >> spec.sensor_range; preset.sensor_range = spec.sensor_range; }
    else if (key == "noise_sigma") { vs >> spec.noise_sigma; preset.noise_sigma = spec.noise_sigma; }
    else if (key == "drift_translation_rate") { vs >> spec.drift.translation_rate; preset.drift.translation_rate = spec.drift.translation_rate; }
    else if (key == "drift_rotation_rate_deg") { vs >> spec.drift.rotation_rate_deg; preset.drift.rotation_rate_deg = spec.drift.rotation_rate_deg; }
    else if (key == "drift_translation_sigma") { vs >> spec.drift.translation_sigma; preset.drift.translation_sigma = spec.drift.translation_sigma; }
    else if (key == "drift_rotation_sigma_deg") { vs >> spec.drift.rotation_sigma_deg; preset.drift.rotation_sigma_deg = spec.drift.rotation_sigma_deg; }
    else if (key == "wall") {
      loopclose::SyntheticWorld::Rect r;
      if (!(vs >> r.lo.x() >> r.lo.y() >> r.lo.z() >> r.hi.x() >> r.hi.y() >> r.hi.z())) {
        throw std::runtime_error("spec: wall needs 6 numbers");
      }
      vs >> r.weight;
      r.axis = -1;
      for (int k = 0; k < 3; ++k) {
        if (r.lo[k] == r.hi[k]) r.axis = k;
      }
      if (r.axis < 0) throw std::runtime_error("spec: wall must be axis-aligned (one flat axis)");
      spec.world.rects.push_back(r);
    } else if (key == "pole") {
      double x, y, z0, z1;
      if (!(vs >> x >> y >> z0 >> z1)) throw std::runtime_error("spec: pole needs 4 numbers");
      loopclose::SyntheticWorld::Segment s{{x, y, z0}, {x, y, z1}, 2.0};
      vs >> s.weight;
      spec.world.segments.push_back(s);
    } else if (key == "strut") {
      loopclose::SyntheticWorld::Segment s;
      if (!(vs >> s.a.x() >> s.a.y() >> s.a.z() >> s.b.x() >> s.b.y() >> s.b.z())) {
        throw std::runtime_error("spec: strut needs 6 numbers");
      }
      s.weight = 2.0;
      vs >> s.weight;
      spec.world.segments.push_back(s);
    } else if (key == "waypoint") {
      loopclose::Vec3 w;
      if (!(vs >> w.x() >> w.y() >> w.z())) throw std::runtime_error("spec: waypoint needs 3 numbers");
      spec.waypoints.push_back(w);
    } else {
      throw std::runtime_error("spec: unknown key '" + key + "'");
    }
  }
  if (use_preset) {
    loopclose::SynthSpec built = loopclose::square_loop_spec(preset);
    // Explicit surfaces/waypoints extend the preset world.
    for (const auto& r : spec.world.rects) built.world.rects.push_back(r);
    for (const auto& s : spec.world.segments) built.world.segments.push_back(s);
    return built;
  }
  return spec;
}

int run_command(const fs::path& config_path, const fs::path& frames, const fs::path& trajectory,
                const fs::path& ground_truth, const fs::path& out, const ConfigCli& cli) {
  loopclose::Config config;
  if (!config_path.empty()) config = loopclose::load_config(config_path);
  apply_config_flags(config, cli);
  config.validate();

  const loopclose::Dataset dataset = loopclose::load_dataset(frames, trajectory, ground_truth);
  loopclose::Engine engine(config);
  const loopclose::RunReport report = engine.run(dataset);
  loopclose::write_report_files(out, report, engine);

  std::printf("frames: %zu\n", report.trajectory_before.size());
  std::printf("keyframes: %zu\n", report.keyframes.size());
  std::printf("loop candidates: %zu, accepted: %d\n", report.loops.size(),
              report.accepted_loops);
  std::printf("skipped points: %llu\n",
              static_cast<unsigned long long>(report.skipped_points));
  if (!dataset.ground_truth.empty()) {
    const loopclose::Metrics m = loopclose::evaluate(report, dataset.ground_truth, config);
    std::printf("endpoint error before/after: %.4f / %.4f m\n", m.endpoint_error_before,
                m.endpoint_error_after);
    std::printf("ATE RMSE before/after: %.4f / %.4f m\n", m.ate_rmse_before, m.ate_rmse_after);
    std::printf("loop precision/recall: %.3f / %.3f\n", m.precision, m.recall);
  }
  return 0;
}

int synth_command(const fs::path& spec_path, std::uint64_t seed, const fs::path& out) {
  const loopclose::SynthSpec spec = load_synth_spec(spec_path);
  const loopclose::Dataset dataset = loopclose::generate_synthetic(spec, seed);
  loopclose::write_dataset(out, dataset);
  std::printf("frames: %zu\n", dataset.frames.size());
  std::size_t points = 0;
  for (const auto& f : dataset.frames) points += f.size();
  std::printf("points: %zu\n", points);
  std::printf("wrote %s\n", (out / "frames").string().c_str());
  return 0;
}

int eval_command(const fs::path& report_dir, const fs::path& ground_truth_path) {
  const auto read_trajectory = [](const fs::path& p) {
    std::ifstream is(p);
    if (!is) throw std::runtime_error(p.string() + ": cannot open");
    std::vector<loopclose::RigidTransform> poses;
    for (const auto& e : loopclose::read_tum(is, p)) poses.push_back(e.pose);
    return poses;
  };

  loopclose::RunReport report;
  report.trajectory_before = read_trajectory(report_dir / "trajectory_before.tum");
  report.trajectory_after = read_trajectory(report_dir / "trajectory_after.tum");
  const auto ground_truth = read_trajectory(ground_truth_path);

  // Keyframe layout and loop records from the report directory.
  {
    std::ifstream is(report_dir / "keyframes.csv");
    if (!is) throw std::runtime_error("missing keyframes.csv in report directory");
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      loopclose::Keyframe kf;
      long long id, first, last;
      std::size_t cells;
      int weak;
      double x, y, z;
      if (std::sscanf(line.c_str(), "%lld,%lld,%lld,%zu,%d,%lf,%lf,%lf", &id, &first, &last,
                      &cells, &weak, &x, &y, &z) < 8) {
        throw std::runtime_error("bad keyframes.csv row: " + line);
      }
      kf.id = id;
      kf.first_frame = first;
      kf.last_frame = last;
      report.keyframes.push_back(kf);
    }
  }
  {
    std::ifstream is(report_dir / "loops.csv");
    if (!is) throw std::runtime_error("missing loops.csv in report directory");
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
      loopclose::LoopRecord r;
      long long q, m;
      int acc;
      if (std::sscanf(line.c_str(), "%lld,%lld,%lf,%lf,%d", &q, &m, &r.sim_plane, &r.sim_line,
                      &acc) != 5) {
        throw std::runtime_error("bad loops.csv row: " + line);
      }
      r.query_id = q;
      r.match_id = m;
      r.accepted_by_alignment = acc != 0;
      report.loops.push_back(r);
    }
  }

  loopclose::Config config;  // defaults define the revisit radius and exclusion
  const loopclose::Metrics m = loopclose::evaluate(report, ground_truth, config);
  std::printf("endpoint_error_before,%.6f\n", m.endpoint_error_before);
  std::printf("endpoint_error_after,%.6f\n", m.endpoint_error_after);
  std::printf("ate_rmse_before,%.6f\n", m.ate_rmse_before);
  std::printf("ate_rmse_after,%.6f\n", m.ate_rmse_after);
  std::printf("precision,%.6f\n", m.precision);
  std::printf("recall,%.6f\n", m.recall);
  std::printf("ground_truth_pairs,%d\n", m.ground_truth_pairs);
  std::printf("detected_pairs,%d\n", m.detected_pairs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR loop closure engine"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run the loop closure pipeline on a dataset");
  fs::path config_path, frames_dir, trajectory_file, ground_truth_file, out_dir;
  ConfigCli cli;
  run->add_option("--config", config_path, "Config file (key = value)");
  run->add_option("--frames", frames_dir, "Directory of frame point clouds")->required();
  run->add_option("--trajectory", trajectory_file, "TUM odometry trajectory")->required();
  run->add_option("--ground-truth", ground_truth_file, "TUM ground-truth trajectory");
  run->add_option("--out", out_dir, "Output directory")->required();
  add_config_flags(run, cli);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  fs::path spec_path, synth_out;
  std::uint64_t seed = 1;
  synth->add_option("--spec", spec_path, "World spec file")->required();
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--out", synth_out, "Output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a run report against ground truth");
  fs::path report_dir, gt_path;
  eval->add_option("--report", report_dir, "Report directory from 'run'")->required();
  eval->add_option("--ground-truth", gt_path, "TUM ground-truth trajectory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return run_command(config_path, frames_dir, trajectory_file, ground_truth_file, out_dir,
                         cli);
    }
    if (synth->parsed()) return synth_command(spec_path, seed, synth_out);
    if (eval->parsed()) return eval_command(report_dir, gt_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
