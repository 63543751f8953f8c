// Acceptance suite: one test per criterion, each printing a PASS/FAIL line
// with the measured values.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "loopclose/loopclose.hpp"
#include "scenes.hpp"
#include "test_support.hpp"

using namespace loopclose;
using testsupport::Rng;

namespace {

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %d] %s - %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

Config loop_config() {
  Config config;
  config.keyframe_size = 28;
  return config;
}

SynthSpec loop_world() {
  SquareLoopParams params;
  params.side = 108.0;
  params.width = 9.0;
  params.frames_per_side = 84;
  params.points_per_frame = 900;
  params.drift.translation_rate = 0.02;   // meters per frame
  params.drift.rotation_rate_deg = 0.05;  // degrees per frame
  return square_loop_spec(params);
}

}  // namespace

// Criterion 1: incremental per-cell statistics match a batch recomputation
// within 1e-9 relative over 100 cells x 10^4 points, in under 5 seconds.
TEST(Acceptance, Criterion1_IncrementalStatisticsOracle) {
  const Timer timer;
  Rng rng(1001);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const GridIndex index{static_cast<std::int64_t>(c), 0, 0};
    Cell cell = make_cell(index, Vec3(1, 1, 1));
    std::vector<Vec3> pts;
    pts.reserve(10000);
    for (int i = 0; i < 10000; ++i) {
      const Vec3 p(static_cast<double>(c) + rng.uniform(), rng.uniform(), rng.uniform());
      pts.push_back(p);
      update_stats(cell, p);
    }
    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
    cov /= static_cast<double>(pts.size() - 1);
    worst = std::max(worst, (cell.mean - mean).cwiseAbs().maxCoeff() /
                                std::max(1.0, mean.cwiseAbs().maxCoeff()));
    worst = std::max(worst, (cell.covariance - cov).cwiseAbs().maxCoeff() /
                                std::max(1e-12, cov.cwiseAbs().maxCoeff()));
  }
  const double elapsed = timer.seconds();
  const bool pass = worst <= 1e-9 && elapsed < 5.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "max relative error %.3g (tol 1e-9), %.2f s (limit 5 s)",
                worst, elapsed);
  report(1, pass, buf);
  EXPECT_LE(worst, 1e-9);
  EXPECT_LT(elapsed, 5.0);
}

// Criterion 2: similarity matches a direct NCC evaluation within 1e-12 over
// 1000 random pairs; self-similarity is 1; symmetric.
TEST(Acceptance, Criterion2_NccOracle) {
  Rng rng(1002);
  double worst_diff = 0.0;
  double worst_self = 0.0;
  double worst_sym = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    Histogram2D a, b;
    for (int i = 0; i < 3600; ++i) {
      a.data()[i] = rng.uniform(0.0, 5.0);
      b.data()[i] = rng.uniform(0.0, 5.0);
    }
    // Direct two-pass evaluation, independent of the library path.
    long double ma = 0.0L, mb = 0.0L;
    for (int i = 0; i < 3600; ++i) {
      ma += a.data()[i];
      mb += b.data()[i];
    }
    ma /= 3600;
    mb /= 3600;
    long double num = 0.0L, da = 0.0L, db = 0.0L;
    for (int i = 0; i < 3600; ++i) {
      const long double xa = a.data()[i] - ma;
      const long double xb = b.data()[i] - mb;
      num += xa * xb;
      da += xa * xa;
      db += xb * xb;
    }
    const double direct = static_cast<double>(num / std::sqrt(da * db));
    const auto s_ab = similarity(a, b);
    const auto s_ba = similarity(b, a);
    const auto s_aa = similarity(a, a);
    ASSERT_TRUE(s_ab && s_ba && s_aa);
    worst_diff = std::max(worst_diff, std::abs(*s_ab - direct));
    worst_self = std::max(worst_self, std::abs(*s_aa - 1.0));
    worst_sym = std::max(worst_sym, std::abs(*s_ab - *s_ba));
    ASSERT_LE(std::abs(*s_ab), 1.0 + 1e-12);
  }
  const bool pass = worst_diff <= 1e-12 && worst_self <= 1e-12 && worst_sym <= 1e-15;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "direct-formula diff %.3g (tol 1e-12), self %.3g, symmetry %.3g", worst_diff,
                worst_self, worst_sym);
  report(2, pass, buf);
  EXPECT_LE(worst_diff, 1e-12);
  EXPECT_LE(worst_self, 1e-12);
  EXPECT_LE(worst_sym, 1e-15);
}

// Criterion 3: statistical rotation invariance. 50 random rotations per
// magnitude 30..180 degrees: mean plane self-similarity >= 0.90 at every
// magnitude and above the cross-scene similarity, within 2 minutes.
TEST(Acceptance, Criterion3_RotationInvariance) {
  const Timer timer;
  Rng rng(1003);
  const auto pts_a = testsupport::sample_scene(testsupport::scene_a(), rng);
  const auto pts_b = testsupport::sample_scene(testsupport::scene_b(), rng);
  const auto base_a = testsupport::make_scene_keyframe(pts_a);
  const auto base_b = testsupport::make_scene_keyframe(pts_b);
  ASSERT_FALSE(base_a->weak);
  ASSERT_FALSE(base_b->weak);

  bool pass = true;
  std::ostringstream detail;
  for (int magnitude = 30; magnitude <= 180; magnitude += 30) {
    double self_sum = 0.0;
    double cross_sum = 0.0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
      const Mat3 q = rng.rotation_with_angle(magnitude * M_PI / 180.0);
      const auto rotated =
          testsupport::make_scene_keyframe(testsupport::rotate_points(pts_a, q));
      const auto self = similarity(rotated->hist_plane, base_a->hist_plane);
      const auto cross = similarity(rotated->hist_plane, base_b->hist_plane);
      ASSERT_TRUE(self && cross);
      self_sum += *self;
      cross_sum += *cross;
    }
    const double self_mean = self_sum / trials;
    const double cross_mean = cross_sum / trials;
    detail << magnitude << "deg self " << std::round(self_mean * 1000) / 1000 << " cross "
           << std::round(cross_mean * 1000) / 1000 << "; ";
    if (self_mean < 0.90 || cross_mean >= self_mean) pass = false;
  }
  const double elapsed = timer.seconds();
  detail << elapsed << " s (limit 120 s)";
  if (elapsed >= 120.0) pass = false;
  report(3, pass, detail.str());
  EXPECT_TRUE(pass);
  EXPECT_LT(elapsed, 120.0);
}

// Criterion 4: alignment recovers 100 random rigid perturbations (<= 1 m,
// <= 10 deg) within 0.05 m / 0.5 deg in at least 95 cases, and the
// reverse-direction composition is within 0.02 m / 0.2 deg of identity.
TEST(Acceptance, Criterion4_AlignmentRecovery) {
  Rng srng(1004);
  const auto pts = testsupport::sample_scene(testsupport::scene_a(), srng);
  const auto kf = testsupport::make_scene_keyframe(pts);
  const auto cells = feature_cells_from(kf->feature_cells);
  ASSERT_GE(cells.size(), 10u);

  Rng rng(1005);
  int recovered = 0;
  int round_trips = 0;
  int round_trip_ok = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    RigidTransform truth;
    truth.rotation = rng.random_rotation(0.8);
    truth.translation = rng.normal_vec3() * 3.0;
    std::vector<FeatureCell> moved = cells;
    for (FeatureCell& c : moved) {
      c.mean = truth.apply(c.mean);
      c.direction = truth.rotation * c.direction;
    }
    const AlignmentTarget target(moved);

    Vec6 twist;
    twist.head<3>() = rng.unit_vec3() * rng.uniform(0.0, 1.0);
    twist.tail<3>() = rng.unit_vec3() * rng.uniform(0.0, 10.0 * M_PI / 180.0);
    const RigidTransform guess = compose(truth, se3_exp(twist));
    const auto result = align(cells, target, {{guess}});
    if (result && result->accepted) {
      const double terr = (result->relative_pose.translation - truth.translation).norm();
      const double rerr =
          rotation_angle(result->relative_pose.rotation.transpose() * truth.rotation) * 180.0 /
          M_PI;
      if (terr < 0.05 && rerr < 0.5) ++recovered;

      if (t % 5 == 0) {
        const AlignmentTarget back_target(cells);
        Vec6 back_twist;
        back_twist.head<3>() = rng.unit_vec3() * rng.uniform(0.0, 0.5);
        back_twist.tail<3>() = rng.unit_vec3() * rng.uniform(0.0, 5.0 * M_PI / 180.0);
        const auto reverse = align(moved, back_target,
                                   {{compose(truth.inverse(), se3_exp(back_twist))}});
        if (reverse && reverse->accepted) {
          ++round_trips;
          const RigidTransform round =
              compose(result->relative_pose, reverse->relative_pose);
          if (round.translation.norm() < 0.02 &&
              rotation_angle(round.rotation) * 180.0 / M_PI < 0.2) {
            ++round_trip_ok;
          }
        }
      }
    }
  }
  const bool pass = recovered >= 95 && round_trips > 0 && round_trip_ok == round_trips;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "recovered %d/100 (need 95); reverse composition %d/%d within 0.02 m / 0.2 deg",
                recovered, round_trip_ok, round_trips);
  report(4, pass, buf);
  EXPECT_GE(recovered, 95);
  EXPECT_GT(round_trips, 0);
  EXPECT_EQ(round_trip_ok, round_trips);
}

// Criterion 5: pose-graph exactness on noise-free graphs up to 50 nodes and
// Jacobian agreement with finite differences.
TEST(Acceptance, Criterion5_PoseGraphExactness) {
  Rng rng(1006);
  bool exact_ok = true;
  double worst_pose = 0.0;
  double worst_cost_ratio = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 10 + trial * 10;  // up to 50 nodes
    std::vector<RigidTransform> truth;
    truth.push_back(RigidTransform::identity());
    for (int i = 1; i < n; ++i) {
      RigidTransform step;
      step.rotation = rng.random_rotation(0.3);
      step.translation = rng.normal_vec3();
      truth.push_back(compose(truth.back(), step));
    }
    PoseGraph graph;
    for (int i = 0; i < n; ++i) graph.add_node(i, truth[static_cast<std::size_t>(i)]);
    for (int i = 0; i + 1 < n; ++i) graph.add_odometry_edge(i, i + 1);
    AlignmentResult loop;
    loop.relative_pose = RigidTransform::identity();
    loop.mean_residual = 0.02;
    loop.converged = true;
    loop.accepted = true;
    graph.add_loop_edge(loop, n - 1, 0);
    if (n > 20) graph.add_loop_edge(loop, n - 1, n / 2);

    for (int i = 1; i < n; ++i) {
      Vec6 twist;
      twist.head<3>() = rng.normal_vec3() * 0.15;
      twist.tail<3>() = rng.normal_vec3() * 0.04;
      graph.set_pose(i, compose(truth[static_cast<std::size_t>(i)], se3_exp(twist)));
    }
    const OptimizeReport r = graph.optimize();
    if (r.final_cost >= 1e-16 * (1.0 + r.initial_cost)) exact_ok = false;
    worst_cost_ratio = std::max(worst_cost_ratio, r.final_cost / (1.0 + r.initial_cost));
    for (int i = 0; i < n; ++i) {
      worst_pose = std::max(
          worst_pose, testsupport::transform_diff(graph.pose_of(i), truth[static_cast<std::size_t>(i)]));
    }
  }

  double worst_jac = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    PoseEdge e;
    e.measurement = rng.random_transform(1.5, 2.0);
    const RigidTransform pf = rng.random_transform(1.5, 2.0);
    Vec6 noise;
    noise.head<3>() = rng.normal_vec3() * 0.1;
    noise.tail<3>() = rng.normal_vec3() * 0.05;
    const RigidTransform pt = compose(compose(pf, e.measurement), se3_exp(noise));
    Vec6 r;
    Mat6 jf, jt;
    edge_jacobians(e, pf, pt, r, jf, jt);
    const double eps = 1e-6;
    for (int k = 0; k < 6; ++k) {
      Vec6 d = Vec6::Zero();
      d[k] = eps;
      const Vec6 fd_t = (edge_residual(e, pf, compose(pt, se3_exp(d))) -
                         edge_residual(e, pf, compose(pt, se3_exp(-d)))) /
                        (2.0 * eps);
      const Vec6 fd_f = (edge_residual(e, compose(pf, se3_exp(d)), pt) -
                         edge_residual(e, compose(pf, se3_exp(-d)), pt)) /
                        (2.0 * eps);
      worst_jac = std::max(worst_jac, (fd_t - jt.col(k)).cwiseAbs().maxCoeff() /
                                          std::max(1.0, fd_t.cwiseAbs().maxCoeff()));
      worst_jac = std::max(worst_jac, (fd_f - jf.col(k)).cwiseAbs().maxCoeff() /
                                          std::max(1.0, fd_f.cwiseAbs().maxCoeff()));
    }
  }

  const bool pass = exact_ok && worst_pose < 1e-6 && worst_jac < 1e-5;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "final/initial cost %.3g (tol 1e-16), pose error %.3g (tol 1e-6), Jacobian FD "
                "diff %.3g (tol 1e-5)",
                worst_cost_ratio, worst_pose, worst_jac);
  report(5, pass, buf);
  EXPECT_TRUE(exact_ok);
  EXPECT_LT(worst_pose, 1e-6);
  EXPECT_LT(worst_jac, 1e-5);
}

// Criterion 6: end-to-end drift correction on the synthetic square loop
// with 0.02 m + 0.05 deg injected drift per frame, at the default 0.90 /
// 0.65 similarity thresholds, in under 5 minutes.
TEST(Acceptance, Criterion6_EndToEndDriftCorrection) {
  const Timer timer;
  const Config config = loop_config();
  ASSERT_DOUBLE_EQ(config.plane_threshold, 0.90);
  ASSERT_DOUBLE_EQ(config.line_threshold, 0.65);
  const Dataset data = generate_synthetic(loop_world(), 33);
  Engine engine(config);
  const RunReport run = engine.run(data);
  const Metrics m = evaluate(run, data.ground_truth, config);
  const double elapsed = timer.seconds();

  const bool pass = run.keyframes.size() >= 12 && run.accepted_loops >= 1 &&
                    m.precision == 1.0 &&
                    m.endpoint_error_after <= 0.1 * m.endpoint_error_before &&
                    elapsed < 300.0;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "%zu keyframes, %d accepted loops, precision %.2f, endpoint %.2f -> %.2f m "
                "(%.1f%%, need <= 10%%), %.1f s (limit 300 s)",
                run.keyframes.size(), run.accepted_loops, m.precision, m.endpoint_error_before,
                m.endpoint_error_after,
                100.0 * m.endpoint_error_after / m.endpoint_error_before, elapsed);
  report(6, pass, buf);
  EXPECT_GE(run.keyframes.size(), 12u);
  EXPECT_GE(run.accepted_loops, 1);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_LE(m.endpoint_error_after, 0.1 * m.endpoint_error_before);
  EXPECT_LT(elapsed, 300.0);
}

// Criterion 7: desk-scale timing. One 2D histogram of a 5*10^4-cell
// keyframe in < 10 ms, one similarity in < 1 ms, one alignment in < 5 s,
// and the ordering similarity << histogram << alignment.
TEST(Acceptance, Criterion7_TimingTargets) {
  Rng rng(1007);
  // Histogram of a large synthetic keyframe.
  std::vector<Cell> cells(50000);
  for (Cell& c : cells) {
    c.shape = (rng.uniform() < 0.8) ? CellShape::Plane : CellShape::Line;
    c.feature_direction = rng.unit_vec3();
  }
  std::vector<const Cell*> ptrs;
  ptrs.reserve(cells.size());
  for (const Cell& c : cells) ptrs.push_back(&c);
  const Mat3 rotation = rng.random_rotation();
  double hist_ms = 0.0;
  {
    const Timer t;
    const int reps = 20;
    for (int i = 0; i < reps; ++i) {
      volatile double sink = build_histograms(ptrs, rotation).first.total();
      (void)sink;
    }
    hist_ms = t.seconds() * 1000.0 / reps;
  }

  Histogram2D h1, h2;
  for (int i = 0; i < 3600; ++i) {
    h1.data()[i] = rng.uniform();
    h2.data()[i] = rng.uniform();
  }
  double sim_ms = 0.0;
  {
    const Timer t;
    const int reps = 2000;
    double sink = 0.0;
    for (int i = 0; i < reps; ++i) sink += similarity(h1, h2).value_or(0.0);
    sim_ms = t.seconds() * 1000.0 / reps;
    ASSERT_GT(sink, -1e9);
  }

  Rng srng(1008);
  const auto pts = testsupport::sample_scene(testsupport::scene_a(), srng);
  const auto kf = testsupport::make_scene_keyframe(pts);
  const auto base_features = feature_cells_from(kf->feature_cells);
  // Tile the scene into a keyframe-scale registration problem.
  std::vector<FeatureCell> features;
  for (int gx = -1; gx <= 1; ++gx) {
    for (int gy = -1; gy <= 1; ++gy) {
      for (const FeatureCell& c : base_features) {
        FeatureCell shifted = c;
        shifted.mean += Vec3(60.0 * gx, 60.0 * gy, 0.0);
        features.push_back(shifted);
      }
    }
  }
  std::vector<FeatureCell> moved = features;
  RigidTransform truth;
  truth.rotation = srng.random_rotation(0.5);
  truth.translation = srng.normal_vec3() * 2.0;
  for (FeatureCell& c : moved) {
    c.mean = truth.apply(c.mean);
    c.direction = truth.rotation * c.direction;
  }
  const AlignmentTarget target(moved);
  Vec6 twist;
  twist.head<3>() = srng.unit_vec3() * 0.8;
  twist.tail<3>() = srng.unit_vec3() * (8.0 * M_PI / 180.0);
  double align_ms = 0.0;
  bool aligned_ok = false;
  {
    const Timer t;
    const auto result = align(features, target, {{compose(truth, se3_exp(twist))}});
    align_ms = t.seconds() * 1000.0;
    aligned_ok = result.has_value() && result->accepted;
  }

  const bool ordering = sim_ms < hist_ms && hist_ms < align_ms;
  const bool pass =
      hist_ms < 10.0 && sim_ms < 1.0 && align_ms < 5000.0 && ordering && aligned_ok;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "histogram %.3f ms (limit 10), similarity %.4f ms (limit 1), alignment %.1f ms "
                "(limit 5000), ordering %s",
                hist_ms, sim_ms, align_ms, ordering ? "similarity < histogram < alignment" : "VIOLATED");
  report(7, pass, buf);
  EXPECT_LT(hist_ms, 10.0);
  EXPECT_LT(sim_ms, 1.0);
  EXPECT_LT(align_ms, 5000.0);
  EXPECT_TRUE(ordering);
  EXPECT_TRUE(aligned_ok);
}

// Criterion 8: two single-threaded runs with identical config, dataset and
// seed produce byte-identical loops.csv and trajectory_after.tum.
TEST(Acceptance, Criterion8_Determinism) {
  namespace fs = std::filesystem;
  const Config config = loop_config();
  const Dataset data = generate_synthetic(loop_world(), 33);

  const fs::path base = fs::temp_directory_path() / "loopclose_acceptance_det";
  fs::remove_all(base);
  const auto run_once = [&](const fs::path& out) {
    Engine engine(config);
    const RunReport run = engine.run(data);
    write_report_files(out, run, engine);
  };
  run_once(base / "a");
  run_once(base / "b");

  const auto bytes = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  const bool loops_equal = bytes(base / "a" / "loops.csv") == bytes(base / "b" / "loops.csv");
  const bool traj_equal = bytes(base / "a" / "trajectory_after.tum") ==
                          bytes(base / "b" / "trajectory_after.tum");
  const bool nonempty = !bytes(base / "a" / "trajectory_after.tum").empty();
  fs::remove_all(base);

  const bool pass = loops_equal && traj_equal && nonempty;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "loops.csv identical: %s, trajectory_after.tum identical: %s",
                loops_equal ? "yes" : "no", traj_equal ? "yes" : "no");
  report(8, pass, buf);
  EXPECT_TRUE(loops_equal);
  EXPECT_TRUE(traj_equal);
  EXPECT_TRUE(nonempty);
}
