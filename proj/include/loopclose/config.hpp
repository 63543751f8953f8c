#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "loopclose/alignment.hpp"
#include "loopclose/descriptor.hpp"
#include "loopclose/se3.hpp"

namespace loopclose {

/// Engine configuration. Defaults: 100 frames per keyframe, 1 m cells,
/// classification on cells with 5+ points at ratio 3, similarity gates
/// 0.90 (plane) and 0.65 (line), 0.1 m alignment acceptance.
struct Config {
  int keyframe_size = 100;
  Vec3 cell_size = Vec3(1.0, 1.0, 1.0);
  int min_points = 5;
  double plane_ratio = 3.0;
  double line_ratio = 3.0;
  double blur_sigma = 1.0;
  double plane_threshold = 0.90;
  double line_threshold = 0.65;
  int temporal_exclusion = 5;
  double accept_distance = 0.1;

  double search_radius = 0.0;  // 0 = auto: 2 * max cell size
  int align_max_iterations = 50;
  double align_damping = 1e-4;
  double align_update_tolerance = 1e-6;
  double huber_delta = 0.5;
  int min_feature_cells = 10;

  int graph_max_iterations = 100;
  double graph_tolerance = 1e-12;

  double effective_search_radius() const {
    return search_radius > 0.0 ? search_radius : 2.0 * cell_size.maxCoeff();
  }

  ClassifyParams classify_params() const { return {min_points, plane_ratio, line_ratio}; }

  AlignmentParams alignment_params() const {
    AlignmentParams p;
    p.search_radius = effective_search_radius();
    p.huber_delta = huber_delta;
    p.max_iterations = align_max_iterations;
    p.damping_init = align_damping;
    p.update_tolerance = align_update_tolerance;
    p.accept_distance = accept_distance;
    p.min_feature_cells = min_feature_cells;
    return p;
  }

  void validate() const {
    const auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw std::invalid_argument(std::string("config: ") + name + " must be positive");
    };
    positive(keyframe_size, "keyframe_size");
    positive(cell_size.minCoeff(), "cell_size");
    positive(min_points, "min_points");
    positive(plane_ratio, "plane_ratio");
    positive(line_ratio, "line_ratio");
    positive(blur_sigma, "blur_sigma");
    positive(accept_distance, "accept_distance");
    positive(align_max_iterations, "align_max_iterations");
    positive(huber_delta, "huber_delta");
    positive(graph_max_iterations, "graph_max_iterations");
    positive(graph_tolerance, "graph_tolerance");
    if (temporal_exclusion < 0) throw std::invalid_argument("config: temporal_exclusion must be >= 0");
    if (search_radius < 0.0) throw std::invalid_argument("config: search_radius must be >= 0");
    const auto in_unit = [](double v, const char* name) {
      if (!(v > 0.0 && v <= 1.0)) {
        throw std::invalid_argument(std::string("config: ") + name + " must be in (0, 1]");
      }
    };
    in_unit(plane_threshold, "plane_threshold");
    in_unit(line_threshold, "line_threshold");
  }
};

/// Applies one "key = value" assignment. Unknown keys are errors.
inline void apply_config_key(Config& config, const std::string& key, const std::string& value) {
  std::istringstream vs(value);
  const auto parse_double = [&](double& out) {
    if (!(vs >> out)) throw std::invalid_argument("config: bad value for " + key);
  };
  const auto parse_int = [&](int& out) {
    if (!(vs >> out)) throw std::invalid_argument("config: bad value for " + key);
  };
  if (key == "keyframe_size") parse_int(config.keyframe_size);
  else if (key == "cell_size") {
    double x;
    parse_double(x);
    double y = x, z = x;
    vs >> y >> z;  // optional per-axis values
    config.cell_size = Vec3(x, y, z);
  } else if (key == "min_points") parse_int(config.min_points);
  else if (key == "plane_ratio") parse_double(config.plane_ratio);
  else if (key == "line_ratio") parse_double(config.line_ratio);
  else if (key == "blur_sigma") parse_double(config.blur_sigma);
  else if (key == "plane_threshold") parse_double(config.plane_threshold);
  else if (key == "line_threshold") parse_double(config.line_threshold);
  else if (key == "temporal_exclusion") parse_int(config.temporal_exclusion);
  else if (key == "accept_distance") parse_double(config.accept_distance);
  else if (key == "search_radius") parse_double(config.search_radius);
  else if (key == "align_max_iterations") parse_int(config.align_max_iterations);
  else if (key == "align_damping") parse_double(config.align_damping);
  else if (key == "align_update_tolerance") parse_double(config.align_update_tolerance);
  else if (key == "huber_delta") parse_double(config.huber_delta);
  else if (key == "min_feature_cells") parse_int(config.min_feature_cells);
  else if (key == "graph_max_iterations") parse_int(config.graph_max_iterations);
  else if (key == "graph_tolerance") parse_double(config.graph_tolerance);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Key-value config text: one "key = value" per line, '#' comments.
inline Config parse_config(std::istream& is) {
  Config config;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      // Skip blank lines; anything else without '=' is malformed.
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw std::invalid_argument("config: expected 'key = value', got: " + line);
      }
      continue;
    }
    const auto trim = [](std::string s) {
      const std::size_t b = s.find_first_not_of(" \t\r");
      const std::size_t e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_key(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  config.validate();
  return config;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(path.string() + ": cannot open config");
  return parse_config(is);
}

}  // namespace loopclose
