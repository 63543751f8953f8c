#include "loopclose/synthetic.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

using loopclose::Dataset;
using loopclose::DriftSpec;
using loopclose::generate_synthetic;
using loopclose::RigidTransform;
using loopclose::SynthSpec;
using loopclose::SyntheticWorld;
using loopclose::Vec3;

namespace {

SynthSpec tiny_spec() {
  SynthSpec spec;
  SyntheticWorld::Rect wall;
  wall.lo = Vec3(0, -3, 0);
  wall.hi = Vec3(30, -3, 3);
  wall.axis = 1;
  spec.world.rects.push_back(wall);
  SyntheticWorld::Rect other = wall;
  other.lo.y() = other.hi.y() = 3.0;
  spec.world.rects.push_back(other);
  spec.world.segments.push_back({Vec3(5, 0, 0), Vec3(5, 0, 2.5), 2.0});
  spec.waypoints = {Vec3(0, 0, 1), Vec3(30, 0, 1)};
  spec.frames = 40;
  spec.points_per_frame = 300;
  spec.sensor_range = 8.0;
  spec.noise_sigma = 0.01;
  return spec;
}

}  // namespace

TEST(Synthetic, ZeroDriftGivesExactlyTrueTrajectory) {
  const Dataset data = generate_synthetic(tiny_spec(), 7);
  ASSERT_EQ(data.trajectory.size(), data.ground_truth.size());
  for (std::size_t i = 0; i < data.trajectory.size(); ++i) {
    EXPECT_EQ(data.trajectory[i].rotation, data.ground_truth[i].rotation);
    EXPECT_EQ(data.trajectory[i].translation, data.ground_truth[i].translation);
  }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SynthSpec spec = tiny_spec();
  spec.drift.translation_rate = 0.01;
  spec.drift.rotation_sigma_deg = 0.02;
  const Dataset a = generate_synthetic(spec, 99);
  const Dataset b = generate_synthetic(spec, 99);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    ASSERT_EQ(a.frames[f].size(), b.frames[f].size());
    for (std::size_t i = 0; i < a.frames[f].size(); ++i) {
      EXPECT_EQ(a.frames[f][i], b.frames[f][i]);
    }
    EXPECT_EQ(a.trajectory[f].translation, b.trajectory[f].translation);
  }
  const Dataset c = generate_synthetic(spec, 100);
  EXPECT_NE(c.frames[0][0], a.frames[0][0]);
}

// Independent oracle: recompose the drifted trajectory with 4x4 homogeneous
// products and compare the endpoint gap.
TEST(Synthetic, DriftEndpointMatchesExternalRecomposition) {
  SynthSpec spec = tiny_spec();
  spec.drift.translation_rate = 0.02;
  spec.drift.rotation_rate_deg = 0.05;
  const Dataset data = generate_synthetic(spec, 11);

  Eigen::Matrix4d drifted = Eigen::Matrix4d::Identity();
  drifted.topLeftCorner<3, 3>() = data.ground_truth[0].rotation;
  drifted.topRightCorner<3, 1>() = data.ground_truth[0].translation;
  for (std::size_t f = 1; f < data.ground_truth.size(); ++f) {
    const RigidTransform rel =
        loopclose::compose(data.ground_truth[f - 1].inverse(), data.ground_truth[f]);
    loopclose::Vec6 twist = loopclose::Vec6::Zero();
    twist.head<3>() = spec.drift.translation_rate * rel.translation.normalized();
    twist[5] = spec.drift.rotation_rate_deg * M_PI / 180.0;
    const RigidTransform noisy = loopclose::compose(rel, loopclose::se3_exp(twist));
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = noisy.rotation;
    m.topRightCorner<3, 1>() = noisy.translation;
    drifted = drifted * m;
  }
  const Vec3 endpoint = drifted.topRightCorner<3, 1>();
  EXPECT_LT((endpoint - data.trajectory.back().translation).cwiseAbs().maxCoeff(), 1e-9);
  // The injected drift produces a real endpoint gap.
  const double gap =
      (data.trajectory.back().translation - data.ground_truth.back().translation).norm();
  EXPECT_GT(gap, 0.1);
}

TEST(Synthetic, PointsLieOnWorldSurfacesWithinRange) {
  const SynthSpec spec = tiny_spec();
  const Dataset data = generate_synthetic(spec, 21);
  for (std::size_t f = 0; f < data.frames.size(); f += 5) {
    const RigidTransform& pose = data.ground_truth[f];
    for (const Vec3& local : data.frames[f]) {
      EXPECT_LT(local.norm(), spec.sensor_range + 0.1);
      const Vec3 world = pose.apply(local);
      double best = 1e9;
      for (const auto& r : spec.world.rects) {
        const Vec3 clamped = world.cwiseMax(r.lo).cwiseMin(r.hi);
        best = std::min(best, (world - clamped).norm());
      }
      for (const auto& s : spec.world.segments) {
        const Vec3 d = s.b - s.a;
        const double t = std::clamp((world - s.a).dot(d) / d.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (world - (s.a + t * d)).norm());
      }
      EXPECT_LT(best, 6.0 * spec.noise_sigma);
    }
  }
}

TEST(Synthetic, TrajectoryFollowsWaypointsWithTravelHeading) {
  const Dataset data = generate_synthetic(tiny_spec(), 3);
  EXPECT_LT((data.ground_truth.front().translation - Vec3(0, 0, 1)).norm(), 1e-12);
  EXPECT_LT((data.ground_truth.back().translation - Vec3(30, 0, 1)).norm(), 1e-12);
  // Travel along +x: heading is the identity rotation.
  EXPECT_LT(testsupport::max_abs_diff(data.ground_truth[5].rotation,
                                      loopclose::Mat3::Identity()),
            1e-12);
}

TEST(Synthetic, DegenerateSpecThrows) {
  SynthSpec empty;
  empty.waypoints = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  empty.frames = 10;
  EXPECT_THROW(generate_synthetic(empty, 1), std::invalid_argument);

  SynthSpec no_traj = tiny_spec();
  no_traj.waypoints.clear();
  EXPECT_THROW(generate_synthetic(no_traj, 1), std::invalid_argument);
}

TEST(Synthetic, SquareLoopSpecGeometry) {
  loopclose::SquareLoopParams params;
  params.frames_per_side = 40;
  params.side = 36.0;
  params.laps = 1.25;
  const SynthSpec spec = loopclose::square_loop_spec(params);
  EXPECT_EQ(spec.frames, 200);  // 4 * 40 * 1.25
  EXPECT_GE(spec.world.rects.size(), 12u);  // walls + floors (+ceilings)
  EXPECT_GE(spec.world.segments.size(), 12u * 8u);
  const Dataset data = generate_synthetic(spec, 5);
  // Revisit: the position at the start of lap 2 matches the loop start.
  const Vec3 start = data.ground_truth.front().translation;
  const std::size_t lap = static_cast<std::size_t>(0.8 * (spec.frames - 1));
  EXPECT_LT((data.ground_truth[lap].translation - start).norm(), 0.5);
}
