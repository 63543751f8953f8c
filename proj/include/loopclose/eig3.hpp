#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "loopclose/se3.hpp"

namespace loopclose {

/// Eigen-decomposition of a symmetric 3x3 matrix. Eigenvalues are in
/// descending order; column i of eigenvectors pairs with eigenvalue i.
/// Column signs are canonical: the component of largest absolute value
/// (first one on ties) is positive.
struct SymmetricEigen3 {
  Vec3 eigenvalues = Vec3::Zero();
  Mat3 eigenvectors = Mat3::Identity();
};

namespace detail {

inline void canonicalize_column_signs(Mat3& v) {
  for (int c = 0; c < 3; ++c) {
    int arg = 0;
    double best = std::abs(v(0, c));
    for (int r = 1; r < 3; ++r) {
      const double a = std::abs(v(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (v(arg, c) < 0.0) v.col(c) = -v.col(c);
  }
}

inline void sort_descending(Vec3& lam, Mat3& v) {
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return lam[a] > lam[b]; });
  const Vec3 l = lam;
  const Mat3 m = v;
  for (int i = 0; i < 3; ++i) {
    lam[i] = l[order[i]];
    v.col(i) = m.col(order[i]);
  }
}

/// Cyclic Jacobi sweeps; robust near-degenerate fallback.
inline void jacobi_eig3(const Mat3& input, Vec3& lam, Mat3& v) {
  Mat3 a = input;
  v = Mat3::Identity();
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = std::abs(a(0, 1)) + std::abs(a(0, 2)) + std::abs(a(1, 2));
    if (off <= 1e-16 * scale) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a(p, q)) <= 1e-300) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        Mat3 g = Mat3::Identity();
        g(p, p) = c;
        g(q, q) = c;
        g(p, q) = s;
        g(q, p) = -s;
        a = g.transpose() * a * g;
        a(q, p) = a(p, q) = 0.5 * (a(p, q) + a(q, p));
        v = v * g;
      }
    }
  }
  lam = a.diagonal();
}

/// Analytic eigenvalues via the trigonometric solution of the
/// characteristic polynomial; returns them unsorted.
inline Vec3 analytic_eigenvalues(const Mat3& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  if (p1 == 0.0) return a.diagonal();
  const double q = a.trace() / 3.0;
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                    (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  const Mat3 b = (a - q * Mat3::Identity()) / p;
  double r = b.determinant() / 2.0;
  r = std::clamp(r, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  Vec3 lam;
  lam[0] = q + 2.0 * p * std::cos(phi);
  lam[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  lam[1] = 3.0 * q - lam[0] - lam[2];
  return lam;
}

/// Null-space direction of (a - lambda*I) from the largest row cross product.
inline bool eigenvector_for(const Mat3& a, double lambda, Vec3& out) {
  const Mat3 m = a - lambda * Mat3::Identity();
  Vec3 best = Vec3::Zero();
  double best_sq = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const Vec3 c = m.row(i).transpose().cross(m.row(j).transpose());
      const double n = c.squaredNorm();
      if (n > best_sq) {
        best_sq = n;
        best = c;
      }
    }
  }
  if (best_sq <= 0.0) return false;
  out = best / std::sqrt(best_sq);
  return true;
}

}  // namespace detail

inline SymmetricEigen3 eig_sym3(const Mat3& matrix) {
  if (!matrix.allFinite()) {
    throw std::invalid_argument("eig_sym3: non-finite input");
  }
  // Work on the symmetrized matrix; inputs are symmetric within 1e-12.
  const Mat3 a = 0.5 * (matrix + matrix.transpose());
  const double scale = a.cwiseAbs().maxCoeff();

  SymmetricEigen3 out;
  if (scale == 0.0) return out;  // zero matrix: lambda = 0, V = I

  const double norm = a.norm();
  Vec3 lam = detail::analytic_eigenvalues(a);
  std::sort(lam.data(), lam.data() + 3, std::greater<double>());

  const double gap = std::min(lam[0] - lam[1], lam[1] - lam[2]);
  bool ok = gap > 1e-10 * norm;
  Mat3 v = Mat3::Identity();
  if (ok) {
    // Extreme eigenvalues are the best separated; the middle vector
    // completes the orthonormal set.
    Vec3 v0, v2;
    ok = detail::eigenvector_for(a, lam[0], v0) && detail::eigenvector_for(a, lam[2], v2);
    if (ok) {
      v2 -= v2.dot(v0) * v0;
      const double n2 = v2.norm();
      ok = n2 > 1e-8;
      if (ok) {
        v2 /= n2;
        v.col(0) = v0;
        v.col(2) = v2;
        v.col(1) = v2.cross(v0);
        const Mat3 residual = a * v - v * lam.asDiagonal();
        ok = residual.cwiseAbs().maxCoeff() <= 1e-11 * std::max(1.0, norm);
      }
    }
  }
  if (!ok) {
    detail::jacobi_eig3(a, lam, v);
    detail::sort_descending(lam, v);
  }
  detail::canonicalize_column_signs(v);
  out.eigenvalues = lam;
  out.eigenvectors = v;
  return out;
}

}  // namespace loopclose
