#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "loopclose/se3.hpp"

namespace loopclose {

/// Deterministic splitmix64-based generator; all synthetic randomness goes
/// through it so datasets never depend on standard-library distributions.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform());
  }

  Vec3 normal_vec3() { return Vec3(normal(), normal(), normal()); }

  Vec3 unit_vec3() {
    Vec3 v = normal_vec3();
    while (v.norm() < 1e-9) v = normal_vec3();
    return v.normalized();
  }

 private:
  std::uint64_t state_;
};

/// Synthetic world: axis-aligned rectangles (walls, floors, ceilings),
/// freely oriented rectangular panels (signage, awnings, braced sheets) and
/// line segments (poles, struts, edges). Weights scale sampling density.
struct SyntheticWorld {
  struct Rect {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();  // lo[axis] == hi[axis]
    int axis = 2;            // normal axis
    double weight = 1.0;
  };
  struct Panel {
    Vec3 center = Vec3::Zero();
    Vec3 axis_u = Vec3::UnitX();  // in-plane, unit
    Vec3 axis_v = Vec3::UnitZ();  // in-plane, unit
    double half_u = 1.0;
    double half_v = 1.0;
    double weight = 1.0;
  };
  struct Segment {
    Vec3 a = Vec3::Zero();
    Vec3 b = Vec3::Zero();
    double weight = 1.0;  // sampling weight per meter, in square-meter units
  };
  std::vector<Rect> rects;
  std::vector<Panel> panels;
  std::vector<Segment> segments;
};

struct DriftSpec {
  double translation_rate = 0.0;    // meters per frame, along travel
  double rotation_rate_deg = 0.0;   // degrees per frame, about z
  double translation_sigma = 0.0;   // optional random twist, meters
  double rotation_sigma_deg = 0.0;  // optional random twist, degrees

  bool none() const {
    return translation_rate == 0.0 && rotation_rate_deg == 0.0 && translation_sigma == 0.0 &&
           rotation_sigma_deg == 0.0;
  }
};

struct SynthSpec {
  SyntheticWorld world;
  std::vector<Vec3> waypoints;  // polyline; yaw follows the travel direction
  int frames = 0;
  int points_per_frame = 700;
  double sensor_range = 9.0;
  double fov_deg = 360.0;  // full cone angle about the heading; 360 = omnidirectional
  double noise_sigma = 0.01;
  DriftSpec drift;
};

struct Dataset {
  std::vector<std::vector<Vec3>> frames;  // sensor-frame points
  std::vector<double> timestamps;
  std::vector<RigidTransform> trajectory;    // odometry (with injected drift)
  std::vector<RigidTransform> ground_truth;  // true trajectory; may be empty

  void validate() const {
    if (frames.empty()) throw std::invalid_argument("dataset: no frames");
    if (frames.size() != trajectory.size() || frames.size() != timestamps.size()) {
      throw std::invalid_argument("dataset: frame/trajectory/timestamp count mismatch");
    }
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (timestamps[i] <= timestamps[i - 1]) {
        throw std::invalid_argument("dataset: timestamps must be strictly increasing");
      }
    }
    if (!ground_truth.empty() && ground_truth.size() != frames.size()) {
      throw std::invalid_argument("dataset: ground truth length mismatch");
    }
  }
};

namespace detail {

inline Mat3 yaw_rotation(double yaw) {
  Mat3 r = Mat3::Identity();
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  r(0, 0) = c;
  r(0, 1) = -s;
  r(1, 0) = s;
  r(1, 1) = c;
  return r;
}

/// Constant-speed poses along the waypoint polyline; heading follows the
/// segment direction (yaw only).
inline std::vector<RigidTransform> polyline_trajectory(const std::vector<Vec3>& waypoints,
                                                       int frames) {
  if (waypoints.size() < 2 || frames < 2) {
    throw std::invalid_argument("synthetic: need at least 2 waypoints and 2 frames");
  }
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    cumulative.push_back(cumulative.back() + (waypoints[i] - waypoints[i - 1]).norm());
  }
  const double total = cumulative.back();
  if (!(total > 0.0)) throw std::invalid_argument("synthetic: degenerate waypoint polyline");

  std::vector<RigidTransform> poses;
  poses.reserve(frames);
  std::size_t seg = 0;
  for (int f = 0; f < frames; ++f) {
    const double s = total * static_cast<double>(f) / static_cast<double>(frames - 1);
    while (seg + 2 < waypoints.size() && s > cumulative[seg + 1]) ++seg;
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double t = seg_len > 0.0 ? (s - cumulative[seg]) / seg_len : 0.0;
    const Vec3 dir = (waypoints[seg + 1] - waypoints[seg]).normalized();
    RigidTransform pose;
    pose.translation = waypoints[seg] + t * (waypoints[seg + 1] - waypoints[seg]);
    pose.rotation = yaw_rotation(std::atan2(dir.y(), dir.x()));
    poses.push_back(pose);
  }
  return poses;
}

}  // namespace detail

/// Injects per-frame drift into the relative motions of a trajectory: a
/// deterministic twist (translation along travel, rotation about z) plus an
/// optional seeded random twist. Zero drift returns the input unchanged.
inline std::vector<RigidTransform> inject_drift(const std::vector<RigidTransform>& truth,
                                                const DriftSpec& drift, SplitMix& rng) {
  if (drift.none()) return truth;
  std::vector<RigidTransform> out;
  out.reserve(truth.size());
  out.push_back(truth.front());
  for (std::size_t f = 1; f < truth.size(); ++f) {
    const RigidTransform rel = compose(truth[f - 1].inverse(), truth[f]);
    Vec6 twist = Vec6::Zero();
    const double step = rel.translation.norm();
    if (step > 1e-12) {
      twist.head<3>() = drift.translation_rate * (rel.translation / step);
    } else {
      twist.head<3>() = Vec3(drift.translation_rate, 0.0, 0.0);
    }
    twist[5] = drift.rotation_rate_deg * M_PI / 180.0;
    if (drift.translation_sigma > 0.0) {
      twist.head<3>() += drift.translation_sigma * rng.normal_vec3();
    }
    if (drift.rotation_sigma_deg > 0.0) {
      twist.tail<3>() += (drift.rotation_sigma_deg * M_PI / 180.0) * rng.normal_vec3();
    }
    out.push_back(compose(out.back(), compose(rel, se3_exp(twist))));
  }
  return out;
}

/// Deterministic synthetic dataset: true trajectory along the waypoints,
/// surface samples within sensor range expressed in the sensor frame, and a
/// drifted copy of the trajectory as the odometry input.
inline Dataset generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.world.rects.empty() && spec.world.panels.empty() && spec.world.segments.empty()) {
    throw std::invalid_argument("synthetic: world has no surfaces");
  }
  if (spec.points_per_frame <= 0) {
    throw std::invalid_argument("synthetic: points_per_frame must be positive");
  }
  SplitMix rng(seed);
  Dataset out;
  out.ground_truth = detail::polyline_trajectory(spec.waypoints, spec.frames);
  out.trajectory = inject_drift(out.ground_truth, spec.drift, rng);

  const auto rect_area = [](const SyntheticWorld::Rect& r) {
    double area = 1.0;
    for (int k = 0; k < 3; ++k) {
      if (k != r.axis) area *= std::max(0.0, r.hi[k] - r.lo[k]);
    }
    return area;
  };
  const auto rect_distance = [](const SyntheticWorld::Rect& r, const Vec3& p) {
    Vec3 clamped = p.cwiseMax(r.lo).cwiseMin(r.hi);
    return (p - clamped).norm();
  };
  const auto segment_distance = [](const SyntheticWorld::Segment& s, const Vec3& p) {
    const Vec3 d = s.b - s.a;
    const double len_sq = d.squaredNorm();
    const double t = len_sq > 0.0 ? std::clamp((p - s.a).dot(d) / len_sq, 0.0, 1.0) : 0.0;
    return (p - (s.a + t * d)).norm();
  };
  const auto panel_distance = [](const SyntheticWorld::Panel& p, const Vec3& q) {
    const Vec3 d = q - p.center;
    const double u = std::clamp(d.dot(p.axis_u), -p.half_u, p.half_u);
    const double v = std::clamp(d.dot(p.axis_v), -p.half_v, p.half_v);
    return (q - (p.center + u * p.axis_u + v * p.axis_v)).norm();
  };

  const double cos_half_fov =
      spec.fov_deg >= 360.0 ? -1.0 : std::cos(0.5 * spec.fov_deg * M_PI / 180.0);
  out.frames.reserve(spec.frames);
  out.timestamps.reserve(spec.frames);
  std::vector<double> weights;
  std::vector<int> candidates;  // rect indices then (segments | with offset)
  for (int f = 0; f < spec.frames; ++f) {
    const RigidTransform& pose = out.ground_truth[static_cast<std::size_t>(f)];
    const Vec3& sensor = pose.translation;
    weights.clear();
    candidates.clear();
    double total = 0.0;
    for (std::size_t i = 0; i < spec.world.rects.size(); ++i) {
      if (rect_distance(spec.world.rects[i], sensor) > spec.sensor_range) continue;
      const double w = rect_area(spec.world.rects[i]) * spec.world.rects[i].weight;
      if (w <= 0.0) continue;
      candidates.push_back(static_cast<int>(i));
      total += w;
      weights.push_back(total);
    }
    const int panel_offset = static_cast<int>(spec.world.rects.size());
    for (std::size_t i = 0; i < spec.world.panels.size(); ++i) {
      if (panel_distance(spec.world.panels[i], sensor) > spec.sensor_range) continue;
      const auto& p = spec.world.panels[i];
      const double w = 4.0 * p.half_u * p.half_v * p.weight;
      if (w <= 0.0) continue;
      candidates.push_back(panel_offset + static_cast<int>(i));
      total += w;
      weights.push_back(total);
    }
    const int segment_offset = panel_offset + static_cast<int>(spec.world.panels.size());
    for (std::size_t i = 0; i < spec.world.segments.size(); ++i) {
      if (segment_distance(spec.world.segments[i], sensor) > spec.sensor_range) continue;
      const auto& s = spec.world.segments[i];
      const double w = (s.b - s.a).norm() * s.weight;
      if (w <= 0.0) continue;
      candidates.push_back(segment_offset + static_cast<int>(i));
      total += w;
      weights.push_back(total);
    }

    std::vector<Vec3> frame;
    frame.reserve(spec.points_per_frame);
    if (total > 0.0) {
      for (int n = 0; n < spec.points_per_frame; ++n) {
        Vec3 world_point = Vec3::Zero();
        bool ok = false;
        for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
          const double pick = rng.uniform(0.0, total);
          std::size_t idx = 0;
          while (idx + 1 < weights.size() && pick > weights[idx]) ++idx;
          const int c = candidates[idx];
          if (c < panel_offset) {
            const auto& r = spec.world.rects[static_cast<std::size_t>(c)];
            for (int k = 0; k < 3; ++k) {
              world_point[k] = (k == r.axis) ? r.lo[k] : rng.uniform(r.lo[k], r.hi[k]);
            }
          } else if (c < segment_offset) {
            const auto& p = spec.world.panels[static_cast<std::size_t>(c - panel_offset)];
            world_point = p.center + p.axis_u * rng.uniform(-p.half_u, p.half_u) +
                          p.axis_v * rng.uniform(-p.half_v, p.half_v);
          } else {
            const auto& s = spec.world.segments[static_cast<std::size_t>(c - segment_offset)];
            world_point = s.a + rng.uniform() * (s.b - s.a);
          }
          const Vec3 offset = world_point - sensor;
          const double dist = offset.norm();
          ok = dist <= spec.sensor_range;
          if (ok && cos_half_fov > -1.0 && dist > 1e-9) {
            // Forward field of view about the sensor heading.
            const Vec3 heading = pose.rotation.col(0);
            ok = offset.dot(heading) >= cos_half_fov * dist;
          }
        }
        if (!ok) continue;
        world_point += spec.noise_sigma * rng.normal_vec3();
        frame.push_back(pose.rotation.transpose() * (world_point - sensor));
      }
    }
    out.frames.push_back(std::move(frame));
    out.timestamps.push_back(0.1 * f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Square-loop world preset
// ---------------------------------------------------------------------------

struct SquareLoopParams {
  double side = 135.0;            // corridor length, meters
  double width = 9.0;             // corridor width
  double laps = 13.0 / 12.0;
  int frames_per_side = 300;
  int points_per_frame = 700;
  double sensor_range = 9.0;
  double fov_deg = 90.0;          // forward cone, as on a small-FoV LiDAR
  double noise_sigma = 0.03;
  DriftSpec drift;
};

namespace detail {

/// Four-fold symmetric strut cluster: directions (cos y cos t, +-sin y cos t,
/// +-sin t) relative to the corridor axis, so line histograms stay stable
/// under the canonical-rotation sign conventions.
inline void add_strut_cluster(SyntheticWorld& world, const Vec3& base, const Vec3& along,
                              double yaw_deg, double tilt_deg, double length, double weight) {
  const Vec3 across(-along.y(), along.x(), 0.0);
  const double yaw = yaw_deg * M_PI / 180.0;
  const double tilt = tilt_deg * M_PI / 180.0;
  int k = 0;
  for (int rep = 0; rep < 2; ++rep) {
    for (double st : {1.0, -1.0}) {
      for (double sy : {1.0, -1.0}) {
        const Vec3 dir = std::cos(yaw) * std::cos(tilt) * along +
                         sy * std::sin(yaw) * std::cos(tilt) * across +
                         Vec3(0, 0, st * std::sin(tilt));
        // Members diverge outward in their own lateral lanes; descending
        // members start high. No two struts share a cell.
        const Vec3 a = base + along * (2.2 * k) + across * (sy * (0.8 + 0.6 * rep)) +
                       Vec3(0, 0, st > 0.0 ? 0.6 : 3.2);
        world.segments.push_back({a, a + dir.normalized() * length, weight});
        ++k;
      }
    }
  }
}

/// Four-fold symmetric decor panels whose normals sit at (yaw, pitch) off
/// the wall normal. Secondary plane families at interior angles keep the
/// plane histogram away from the fold circle and the poles, where edge
/// binning is unstable.
inline void add_panel_cluster(SyntheticWorld& world, const Vec3& base, const Vec3& along,
                              double yaw_deg, double pitch_deg, double half_u, double half_v,
                              double weight) {
  const Vec3 across(-along.y(), along.x(), 0.0);
  const double yaw = yaw_deg * M_PI / 180.0;
  const double pitch = pitch_deg * M_PI / 180.0;
  int k = 0;
  for (double sy : {1.0, -1.0}) {
    for (double sp : {1.0, -1.0}) {
      const Vec3 normal = std::cos(yaw) * std::cos(pitch) * across +
                          sy * std::sin(yaw) * std::cos(pitch) * along +
                          Vec3(0, 0, sp * std::sin(pitch));
      SyntheticWorld::Panel panel;
      // Alternate sides of the corridor, clear of the strut clusters.
      panel.center = base + along * (4.5 * k) + across * ((k % 2) ? 3.6 : -3.6);
      panel.axis_u = normal.cross(Vec3(0, 0, 1)).normalized();
      panel.axis_v = normal.cross(panel.axis_u).normalized();
      panel.half_u = half_u;
      panel.half_v = half_v;
      panel.weight = weight;
      world.panels.push_back(panel);
      ++k;
    }
  }
}

}  // namespace detail

/// A 4-corridor square loop traversed `laps` times. Every keyframe-length
/// stretch carries its own strut cluster angles, so distinct stretches are
/// separable by line similarity while revisits of the same stretch match.
inline SynthSpec square_loop_spec(const SquareLoopParams& params = {}) {
  SynthSpec spec;
  spec.frames = static_cast<int>(std::lround(4 * params.frames_per_side * params.laps));
  spec.points_per_frame = params.points_per_frame;
  spec.sensor_range = params.sensor_range;
  spec.fov_deg = params.fov_deg;
  spec.noise_sigma = params.noise_sigma;
  spec.drift = params.drift;

  const double side = params.side;
  const double half_w = params.width / 2.0;
  // Corridor centerlines form a square: corners at (0,0), (side,0),
  // (side,side), (0,side).
  const Vec3 corners[4] = {Vec3(0, 0, 0), Vec3(side, 0, 0), Vec3(side, side, 0),
                           Vec3(0, side, 0)};
  const double heights[4] = {5.0, 6.0, 5.5, 6.5};
  const double panel_yaw[4] = {34.5, 43.5, 52.5, 61.5};
  const double panel_pitch[4] = {13.5, 19.5, 16.5, 10.5};

  for (int c = 0; c < 4; ++c) {
    const Vec3 a = corners[c];
    const Vec3 b = corners[(c + 1) % 4];
    const Vec3 along = (b - a).normalized();
    const Vec3 across(-along.y(), along.x(), 0.0);
    const double h = heights[c];

    // Side walls and a narrow walkway strip. The walls are the dominant
    // plane family of every keyframe; the sparse walkway keeps the floor
    // out of the descriptor mass.
    for (double s : {1.0, -1.0}) {
      SyntheticWorld::Rect wall;
      const Vec3 w0 = a + across * (s * half_w);
      const Vec3 w1 = b + across * (s * half_w);
      wall.lo = w0.cwiseMin(w1);
      wall.hi = w0.cwiseMax(w1) + Vec3(0, 0, h);
      wall.axis = (std::abs(across.x()) > 0.5) ? 0 : 1;
      spec.world.rects.push_back(wall);
    }
    SyntheticWorld::Rect walkway;
    walkway.lo = (a - across * 1.2).cwiseMin(b + across * 1.2);
    walkway.hi = (a - across * 1.2).cwiseMax(b + across * 1.2);
    walkway.axis = 2;
    walkway.weight = 0.05;
    spec.world.rects.push_back(walkway);

    // Three keyframe-length stretches per corridor. Strut cluster angles
    // are per stretch (line-histogram signatures); panel cluster angles are
    // per corridor (secondary plane family at interior canonical angles).
    // All angles sit on 3-degree bin centers.
    for (int s = 0; s < 3; ++s) {
      const int stretch = 3 * c + s;
      const double yaw = 16.5 + 9.0 * (stretch % 6);
      const double tilt = 22.5 + 6.0 * (stretch % 5);
      const Vec3 base = a + along * (side * (0.06 + 0.3 * s)) + Vec3(0, 0, 0.5);
      detail::add_strut_cluster(spec.world, base, along, yaw, tilt, 4.8, 14.0);
      const Vec3 panel_base = a + along * (side * (0.12 + 0.3 * s)) + Vec3(0, 0, 2.5);
      detail::add_panel_cluster(spec.world, panel_base, along, panel_yaw[c], panel_pitch[c],
                                2.0, 1.5, 2.5);
      detail::add_panel_cluster(spec.world, panel_base + along * (side * 0.15), along,
                                panel_yaw[c], panel_pitch[c], 2.0, 1.5, 2.5);
    }
  }

  const int laps_whole = static_cast<int>(params.laps);
  const double frac = params.laps - laps_whole;
  spec.waypoints.clear();
  for (int lap = 0; lap < laps_whole; ++lap) {
    for (const Vec3& c : corners) spec.waypoints.push_back(c + Vec3(0, 0, 1.2));
  }
  spec.waypoints.push_back(corners[0] + Vec3(0, 0, 1.2));
  // Fractional lap: walk the remaining corners.
  double remaining = frac * 4.0;
  int idx = 1;
  while (remaining > 1e-9 && idx <= 4) {
    const double step = std::min(1.0, remaining);
    const Vec3 from = corners[(idx - 1) % 4];
    const Vec3 to = corners[idx % 4];
    spec.waypoints.push_back(from + step * (to - from) + Vec3(0, 0, 1.2));
    remaining -= step;
    ++idx;
  }
  return spec;
}

}  // namespace loopclose
