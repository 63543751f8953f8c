#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>

namespace loopclose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Rigid body transform: p_out = rotation * p_in + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }
};

/// compose(a, b): applying the result equals applying b, then a.
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

inline bool is_valid_transform(const RigidTransform& t, double tol = 1e-9) {
  if (!t.rotation.allFinite() || !t.translation.allFinite()) return false;
  const Mat3 rtr = t.rotation.transpose() * t.rotation;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(t.rotation.determinant() - 1.0) <= tol;
}

inline void require_valid_transform(const RigidTransform& t, const char* what) {
  if (!is_valid_transform(t)) {
    throw std::invalid_argument(std::string(what) + ": not a valid rigid transform");
  }
}

// ---------------------------------------------------------------------------
// SO(3)
// ---------------------------------------------------------------------------

inline Mat3 so3_exp(const Vec3& omega) {
  const double theta_sq = omega.squaredNorm();
  const Mat3 w = skew(omega);
  double a, b;  // R = I + a*W + b*W^2
  if (theta_sq < 1e-12) {
    a = 1.0 - theta_sq / 6.0 + theta_sq * theta_sq / 120.0;
    b = 0.5 - theta_sq / 24.0 + theta_sq * theta_sq / 720.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta_sq;
  }
  return Mat3::Identity() + a * w + b * (w * w);
}

inline double rotation_angle(const Mat3& r) {
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return 2.0 * std::atan2(q.vec().norm(), q.w());
}

/// Quaternion-based log; valid for rotation angles below pi - 1e-6.
inline Vec3 so3_log(const Mat3& r) {
  Eigen::Quaterniond q(r);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  const double theta = 2.0 * std::atan2(n, q.w());
  if (theta >= M_PI - 1e-6) {
    throw std::domain_error("so3_log: rotation angle too close to pi");
  }
  if (n < 1e-9) {
    // theta ~ 0: q.vec() = sin(theta/2) * axis ~ (theta/2) * axis
    return q.vec() * (2.0 / q.w()) * (1.0 - n * n / (3.0 * q.w() * q.w()));
  }
  return q.vec() * (theta / n);
}

/// Left Jacobian of SO(3).
inline Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta_sq = omega.squaredNorm();
  const Mat3 w = skew(omega);
  double b, c;  // J = I + b*W + c*W^2
  if (theta_sq < 1e-12) {
    b = 0.5 - theta_sq / 24.0 + theta_sq * theta_sq / 720.0;
    c = 1.0 / 6.0 - theta_sq / 120.0 + theta_sq * theta_sq / 5040.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    b = (1.0 - std::cos(theta)) / theta_sq;
    c = (theta - std::sin(theta)) / (theta_sq * theta);
  }
  return Mat3::Identity() + b * w + c * (w * w);
}

inline Mat3 so3_left_jacobian_inv(const Vec3& omega) {
  const double theta_sq = omega.squaredNorm();
  const Mat3 w = skew(omega);
  double c;  // Jinv = I - W/2 + c*W^2
  if (theta_sq < 1e-12) {
    c = 1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    c = 1.0 / theta_sq - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * w + c * (w * w);
}

// ---------------------------------------------------------------------------
// SE(3); twist layout is [rho; omega] (translation first).
// ---------------------------------------------------------------------------

inline RigidTransform se3_exp(const Vec6& twist) {
  const Vec3 rho = twist.head<3>();
  const Vec3 omega = twist.tail<3>();
  RigidTransform out;
  out.rotation = so3_exp(omega);
  out.translation = so3_left_jacobian(omega) * rho;
  return out;
}

inline Vec6 se3_log(const RigidTransform& t) {
  const Vec3 omega = so3_log(t.rotation);
  Vec6 twist;
  twist.head<3>() = so3_left_jacobian_inv(omega) * t.translation;
  twist.tail<3>() = omega;
  return twist;
}

/// Adjoint of SE(3): Ad(T) * twist == log(T * exp(twist) * T^-1).
inline Mat6 se3_adjoint(const RigidTransform& t) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = t.rotation;
  ad.topRightCorner<3, 3>() = skew(t.translation) * t.rotation;
  ad.bottomRightCorner<3, 3>() = t.rotation;
  return ad;
}

namespace detail {

// Upper-right block of the SE(3) left Jacobian (Barfoot's Q matrix).
inline Mat3 se3_q_matrix(const Vec3& rho, const Vec3& omega) {
  const Mat3 px = skew(rho);
  const Mat3 wx = skew(omega);
  const double theta_sq = omega.squaredNorm();
  double a, m, c;
  if (theta_sq < 1e-10) {
    a = 1.0 / 6.0 - theta_sq / 120.0 + theta_sq * theta_sq / 5040.0;
    m = -1.0 / 24.0 + theta_sq / 720.0 - theta_sq * theta_sq / 40320.0;
    c = -1.0 / 120.0 + theta_sq / 5040.0 - theta_sq * theta_sq / 362880.0;
  } else {
    const double theta = std::sqrt(theta_sq);
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    a = (theta - st) / (theta_sq * theta);
    m = (1.0 - 0.5 * theta_sq - ct) / (theta_sq * theta_sq);
    c = (theta - st - theta_sq * theta / 6.0) / (theta_sq * theta_sq * theta);
  }
  const Mat3 wp = wx * px;
  const Mat3 pw = px * wx;
  const Mat3 wpw = wp * wx;
  return 0.5 * px + a * (wp + pw + wpw) - m * (wx * wp + pw * wx - 3.0 * wpw) -
         0.5 * (m - 3.0 * c) * (wpw * wx + wx * wpw);
}

}  // namespace detail

inline Mat6 se3_left_jacobian(const Vec6& twist) {
  const Mat3 j = so3_left_jacobian(twist.tail<3>());
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.topRightCorner<3, 3>() = detail::se3_q_matrix(twist.head<3>(), twist.tail<3>());
  return out;
}

inline Mat6 se3_left_jacobian_inv(const Vec6& twist) {
  const Mat3 ji = so3_left_jacobian_inv(twist.tail<3>());
  const Mat3 q = detail::se3_q_matrix(twist.head<3>(), twist.tail<3>());
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = ji;
  out.bottomRightCorner<3, 3>() = ji;
  out.topRightCorner<3, 3>() = -ji * q * ji;
  return out;
}

inline Mat6 se3_right_jacobian_inv(const Vec6& twist) {
  return se3_left_jacobian_inv(-twist);
}

}  // namespace loopclose
