#pragma once

#include <Eigen/Dense>

namespace otbot {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

/// Indices into the configuration vector q = (x, y, alpha, phi_r, phi_l, phi_p).
namespace coord {
inline constexpr int x = 0;
inline constexpr int y = 1;
inline constexpr int alpha = 2;
inline constexpr int phi_r = 3;
inline constexpr int phi_l = 4;
inline constexpr int phi_p = 5;
}  // namespace coord

/// Configuration and velocity of the robot. (x, y) is the pivot point P in the
/// ground frame, alpha the platform heading, phi_* the wheel and pivot angles.
/// Angles are never wrapped.
struct RobotState {
  Vec6 q = Vec6::Zero();
  Vec6 qdot = Vec6::Zero();

  RobotState() = default;
  RobotState(const Vec6& q_, const Vec6& qdot_) : q(q_), qdot(qdot_) {}

  static RobotState from_vector(const Vec12& x) {
    return {x.head<6>(), x.tail<6>()};
  }
  Vec12 to_vector() const {
    Vec12 x;
    x << q, qdot;
    return x;
  }

  /// Task-space pose p = (x, y, alpha).
  Vec3 pose() const { return q.head<3>(); }
  /// Platform twist pdot = (xdot, ydot, alphadot).
  Vec3 twist() const { return qdot.head<3>(); }
  /// Motor speeds (phi_r dot, phi_l dot, phi_p dot).
  Vec3 motor_speeds() const { return qdot.tail<3>(); }

  /// Chassis heading; always derived, never stored.
  double theta() const { return q[coord::alpha] - q[coord::phi_p]; }

  bool finite() const { return q.allFinite() && qdot.allFinite(); }
};

/// Motor torques u = (tau_r, tau_l, tau_p) [N m].
struct ControlInput {
  double tau_r = 0.0;
  double tau_l = 0.0;
  double tau_p = 0.0;

  ControlInput() = default;
  ControlInput(double r, double l, double p) : tau_r(r), tau_l(l), tau_p(p) {}
  explicit ControlInput(const Vec3& u) : tau_r(u[0]), tau_l(u[1]), tau_p(u[2]) {}

  Vec3 vec() const { return {tau_r, tau_l, tau_p}; }
  bool finite() const { return vec().allFinite(); }

  /// Clamp every torque into [-limit, limit].
  ControlInput clamped(const Vec3& limit) const {
    return ControlInput(vec().cwiseMax(-limit).cwiseMin(limit));
  }

  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Pose of the differential-drive chassis: wheel-axis midpoint M, heading and
/// forward speed of M.
struct ChassisPose {
  double a = 0.0;
  double b = 0.0;
  double theta = 0.0;
  double v = 0.0;
};

}  // namespace otbot
