#pragma once

// Rolling constraints and instantaneous kinematics. Every matrix here depends
// on the configuration only through the chassis heading theta = alpha - phi_p.

#include <cmath>
#include <utility>

#include "otbot/params.hpp"
#include "otbot/types.hpp"

namespace otbot {

inline double chassis_heading(const Vec6& q) { return q[coord::alpha] - q[coord::phi_p]; }

/// Constraint Jacobian J(q): admissible velocities satisfy J(q) qdot = 0.
inline Mat36 constraint_jacobian(const RobotParams& p, const Vec6& q) {
  const double th = chassis_heading(q);
  const double s = std::sin(th), c = std::cos(th);
  const double k = p.r / (2.0 * p.l2);
  Mat36 J;
  J << 1, 0, p.l1 * s, -0.5 * p.r * c, -0.5 * p.r * c, -p.l1 * s,
       0, 1, -p.l1 * c, -0.5 * p.r * s, -0.5 * p.r * s, p.l1 * c,
       0, 0, 1, -k, k, -1;
  return J;
}

/// Time derivative of J along qdot. Row 3 is identically zero.
inline Mat36 jacobian_time_derivative(const RobotParams& p, const Vec6& q, const Vec6& qdot) {
  const double th = chassis_heading(q);
  const double thdot = qdot[coord::alpha] - qdot[coord::phi_p];
  const double s = std::sin(th), c = std::cos(th);
  Mat36 Jd;
  Jd << 0, 0, p.l1 * c, 0.5 * p.r * s, 0.5 * p.r * s, -p.l1 * c,
        0, 0, p.l1 * s, -0.5 * p.r * c, -0.5 * p.r * c, -p.l1 * s,
        0, 0, 0, 0, 0, 0;
  return Jd * thdot;
}

/// Forward instantaneous kinematics: platform twist = M_FIK(q) * motor speeds.
inline Mat3 fik_matrix(const RobotParams& p, const Vec6& q) {
  const double th = chassis_heading(q);
  const double s = std::sin(th), c = std::cos(th);
  Mat3 m;
  m << p.l2 * c - p.l1 * s, p.l2 * c + p.l1 * s, 0,
       p.l1 * c + p.l2 * s, -p.l1 * c + p.l2 * s, 0,
       1, -1, 2.0 * p.l2 / p.r;
  return (p.r / (2.0 * p.l2)) * m;
}

/// Inverse instantaneous kinematics, the closed-form inverse of M_FIK. Exists
/// for every q because det(M_FIK) = -l1 r^2 / (2 l2) never vanishes.
inline Mat3 iik_matrix(const RobotParams& p, const Vec6& q) {
  const double th = chassis_heading(q);
  const double s = std::sin(th), c = std::cos(th);
  Mat3 m;
  m << p.l1 * c - p.l2 * s, p.l2 * c + p.l1 * s, 0,
       p.l1 * c + p.l2 * s, -p.l2 * c + p.l1 * s, 0,
       p.r * s, -p.r * c, p.r * p.l1;
  return m / (p.r * p.l1);
}

/// d/dt M_IIK along qdot, obtained by the chain rule through theta.
inline Mat3 iik_matrix_derivative(const RobotParams& p, const Vec6& q, const Vec6& qdot) {
  const double th = chassis_heading(q);
  const double thdot = qdot[coord::alpha] - qdot[coord::phi_p];
  const double s = std::sin(th), c = std::cos(th);
  Mat3 m;
  m << -p.l1 * s - p.l2 * c, -p.l2 * s + p.l1 * c, 0,
       -p.l1 * s + p.l2 * c, p.l2 * s + p.l1 * c, 0,
       p.r * c, p.r * s, 0;
  return m * (thdot / (p.r * p.l1));
}

inline double fik_determinant(const RobotParams& p) { return -p.l1 * p.r * p.r / (2.0 * p.l2); }

/// Velocity parameterisations qdot = Lambda * pdot and qdot = Delta * phidot.
struct VelocityMaps {
  Mat63 lambda;
  Mat63 delta;
};

inline VelocityMaps lambda_delta(const RobotParams& p, const Vec6& q) {
  VelocityMaps m;
  m.lambda.topRows<3>().setIdentity();
  m.lambda.bottomRows<3>() = iik_matrix(p, q);
  m.delta.topRows<3>() = fik_matrix(p, q);
  m.delta.bottomRows<3>().setIdentity();
  return m;
}

/// d/dt Lambda = [0; d/dt M_IIK].
inline Mat63 lambda_time_derivative(const RobotParams& p, const Vec6& q, const Vec6& qdot) {
  Mat63 ld = Mat63::Zero();
  ld.bottomRows<3>() = iik_matrix_derivative(p, q, qdot);
  return ld;
}

/// Actuation selector E (6x3): Qa = E u.
inline Mat63 actuation_selector() {
  Mat63 e = Mat63::Zero();
  e.bottomRows<3>().setIdentity();
  return e;
}

/// Admissible velocity for a given platform twist at q.
inline Vec6 admissible_velocity(const RobotParams& p, const Vec6& q, const Vec3& twist) {
  Vec6 qdot;
  qdot << twist, iik_matrix(p, q) * twist;
  return qdot;
}

/// Left-hand side of the integrable rolling constraint
///   alpha - k phi_r + k phi_l - phi_p - K0,   k = r / (2 l2),
/// with K0 evaluated at the reference configuration q0.
inline double holonomic_residual(const RobotParams& p, const Vec6& q, const Vec6& q0) {
  const double k = p.r / (2.0 * p.l2);
  auto lhs = [k](const Vec6& v) {
    return v[coord::alpha] - k * v[coord::phi_r] + k * v[coord::phi_l] - v[coord::phi_p];
  };
  return lhs(q) - lhs(q0);
}

/// Pose and forward speed of the wheel-axis midpoint M.
inline ChassisPose chassis_pose(const RobotParams& p, const RobotState& s) {
  const double th = s.theta();
  ChassisPose c;
  c.theta = th;
  c.a = s.q[coord::x] - p.l1 * std::cos(th);
  c.b = s.q[coord::y] - p.l1 * std::sin(th);
  c.v = 0.5 * p.r * (s.qdot[coord::phi_r] + s.qdot[coord::phi_l]);
  return c;
}

}  // namespace otbot
