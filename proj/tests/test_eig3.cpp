#include "loopclose/eig3.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

using loopclose::eig_sym3;
using loopclose::Mat3;
using loopclose::SymmetricEigen3;
using loopclose::Vec3;
using testsupport::Rng;

namespace {

Mat3 random_symmetric(Rng& rng, double scale = 1.0) {
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      m(i, j) = m(j, i) = rng.normal() * scale;
    }
  }
  return m;
}

void expect_contract(const Mat3& input, const SymmetricEigen3& e, double tol) {
  // Descending eigenvalues.
  EXPECT_GE(e.eigenvalues[0], e.eigenvalues[1]);
  EXPECT_GE(e.eigenvalues[1], e.eigenvalues[2]);
  // Orthonormal columns.
  EXPECT_LT((e.eigenvectors.transpose() * e.eigenvectors - Mat3::Identity()).cwiseAbs().maxCoeff(),
            1e-9);
  // Sigma V = V Lambda.
  const Mat3 lhs = input * e.eigenvectors;
  const Mat3 rhs = e.eigenvectors * e.eigenvalues.asDiagonal();
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), tol * std::max(1.0, input.norm()));
  // Canonical signs: largest-|component| of each column is positive.
  for (int c = 0; c < 3; ++c) {
    int arg = 0;
    for (int r = 1; r < 3; ++r) {
      if (std::abs(e.eigenvectors(r, c)) > std::abs(e.eigenvectors(arg, c))) arg = r;
    }
    EXPECT_GE(e.eigenvectors(arg, c), 0.0);
  }
}

}  // namespace

TEST(Eig3, Identity) {
  const SymmetricEigen3 e = eig_sym3(Mat3::Identity());
  EXPECT_LT((e.eigenvalues - Vec3::Ones()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((e.eigenvectors - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Eig3, AlreadyDiagonal) {
  const SymmetricEigen3 e = eig_sym3(Vec3(4.0, 1.0, 0.0).asDiagonal());
  EXPECT_LT((e.eigenvalues - Vec3(4.0, 1.0, 0.0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((e.eigenvectors - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

// Oracle: reconstruct V Lambda V^T and compare with the input.
TEST(Eig3, ReconstructionOnRandomMatrices) {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 m = random_symmetric(rng);
    const SymmetricEigen3 e = eig_sym3(m);
    expect_contract(m, e, 1e-8);
    const Mat3 rebuilt =
        e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
    EXPECT_LT((rebuilt - m).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Eig3, NearDegenerateEigenvalues) {
  Rng rng(22);
  for (int i = 0; i < 200; ++i) {
    // Two nearly equal eigenvalues force the Jacobi fallback.
    const Mat3 q = rng.random_rotation();
    const Vec3 lam(1.0, 1.0 - rng.uniform(0.0, 1e-11), rng.uniform(0.0, 0.5));
    const Mat3 m = q * lam.asDiagonal() * q.transpose();
    const Mat3 sym = 0.5 * (m + m.transpose());
    const SymmetricEigen3 e = eig_sym3(sym);
    expect_contract(sym, e, 1e-8);
  }
}

TEST(Eig3, ExactlyDegenerate) {
  const SymmetricEigen3 e = eig_sym3(Vec3(2.0, 2.0, 2.0).asDiagonal());
  EXPECT_LT((e.eigenvalues - Vec3(2.0, 2.0, 2.0)).cwiseAbs().maxCoeff(), 1e-12);
  expect_contract(Vec3(2.0, 2.0, 2.0).asDiagonal(), e, 1e-9);
}

TEST(Eig3, ZeroMatrix) {
  const SymmetricEigen3 e = eig_sym3(Mat3::Zero());
  EXPECT_EQ(e.eigenvalues, Vec3::Zero());
  EXPECT_EQ(e.eigenvectors, Mat3::Identity());
}

TEST(Eig3, RankOne) {
  const Vec3 d = Vec3(1.0, 1.0, 1.0).normalized();
  const Mat3 m = 3.0 * d * d.transpose();
  const SymmetricEigen3 e = eig_sym3(m);
  EXPECT_NEAR(e.eigenvalues[0], 3.0, 1e-9);
  EXPECT_NEAR(e.eigenvalues[1], 0.0, 1e-9);
  EXPECT_NEAR(e.eigenvalues[2], 0.0, 1e-9);
  EXPECT_LT((e.eigenvectors.col(0) - d).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Eig3, DeterministicBitIdentical) {
  Rng rng(23);
  const Mat3 m = random_symmetric(rng);
  const SymmetricEigen3 a = eig_sym3(m);
  const SymmetricEigen3 b = eig_sym3(m);
  EXPECT_EQ(a.eigenvalues, b.eigenvalues);
  EXPECT_EQ(a.eigenvectors, b.eigenvectors);
}

TEST(Eig3, NonFiniteInputThrows) {
  Mat3 m = Mat3::Identity();
  m(1, 2) = m(2, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(eig_sym3(m), std::invalid_argument);
}

TEST(Eig3, ScaleInvarianceOfContract) {
  Rng rng(24);
  for (double scale : {1e-8, 1e-4, 1.0, 1e4, 1e8}) {
    const Mat3 m = random_symmetric(rng, scale);
    const SymmetricEigen3 e = eig_sym3(m);
    const Mat3 rebuilt =
        e.eigenvectors * e.eigenvalues.asDiagonal() * e.eigenvectors.transpose();
    EXPECT_LT((rebuilt - m).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, m.norm()));
  }
}
