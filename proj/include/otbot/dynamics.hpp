#pragma once

// Inverse and forward dynamics of the constrained robot.
//
// Two routes are provided. The production route eliminates the Lagrange
// multipliers with the velocity parameterisations (u = Delta' (M qdd + (C - Ef) qd),
// and a block-triangular 6x6 system for the forward problem). The conventional
// route solves the multiplier systems [E -J'] (6x6) and [[M J'];[J 0]] (9x9)
// and is kept as an oracle and to recover the multipliers.

#include <cmath>
#include <string>

#include "otbot/diagnostics.hpp"
#include "otbot/inertia.hpp"
#include "otbot/kinematics.hpp"
#include "otbot/params.hpp"
#include "otbot/types.hpp"

namespace otbot {

/// Threshold on ||J qdot||_inf above which inverse dynamics warns.
inline constexpr double kAdmissibilityTolerance = 1e-6;

struct GeneralizedForces {
  Vec6 actuation = Vec6::Zero();
  Vec6 friction = Vec6::Zero();
  Vec6 disturbance = Vec6::Zero();
};

/// Generalized force of a planar force applied at the pivot point: by virtual
/// power it only has x and y components.
inline Vec6 disturbance_generalized_force(const Vec2& fp) {
  Vec6 Q = Vec6::Zero();
  Q[coord::x] = fp[0];
  Q[coord::y] = fp[1];
  return Q;
}

inline GeneralizedForces generalized_forces(const RobotParams& p, const Vec6& qdot, const ControlInput& u,
                                            const Vec2& fp = Vec2::Zero()) {
  GeneralizedForces g;
  g.actuation = actuation_selector() * u.vec();
  g.friction = friction_matrix(p) * qdot;
  g.disturbance = disturbance_generalized_force(fp);
  return g;
}

struct FwdDynSolution {
  Vec6 qddot = Vec6::Zero();
  Vec3 lambda = Vec3::Zero();
};

struct TaskSpaceModel {
  Mat3 Mbar;
  Mat3 Cbar;
};

inline double constraint_violation(const RobotParams& p, const Vec6& q, const Vec6& qdot) {
  return (constraint_jacobian(p, q) * qdot).lpNorm<Eigen::Infinity>();
}

/// Task-space model  Mbar pdd + Cbar pd = u  with Mbar = Delta' M Lambda and
/// Cbar = Delta' (M Lambdadot + (C - Ef) Lambda).
inline TaskSpaceModel task_space_model(const RobotParams& p, const Vec6& q, const Vec6& qdot) {
  const auto maps = lambda_delta(p, q);
  const Mat6 M = mass_matrix(p, q);
  const Mat6 CmEf = coriolis_matrix(p, q, qdot) - friction_matrix(p);
  TaskSpaceModel t;
  t.Mbar = maps.delta.transpose() * M * maps.lambda;
  t.Cbar = maps.delta.transpose() * (M * lambda_time_derivative(p, q, qdot) + CmEf * maps.lambda);
  return t;
}

/// Multiplier-free inverse dynamics. A non-admissible qdot is accepted but
/// reported through diagnostics::warn.
inline ControlInput inverse_dynamics(const RobotParams& p, const Vec6& q, const Vec6& qdot, const Vec6& qddot) {
  if (const double v = constraint_violation(p, q, qdot); v > kAdmissibilityTolerance)
    diagnostics::warn("inverse_dynamics: non-admissible velocity, ||J qdot|| = " + std::to_string(v));
  const Mat63 delta = lambda_delta(p, q).delta;
  const Mat6 M = mass_matrix(p, q);
  const Mat6 CmEf = coriolis_matrix(p, q, qdot) - friction_matrix(p);
  return ControlInput(delta.transpose() * (M * qddot + CmEf * qdot));
}

struct InverseDynamicsConventional {
  ControlInput u;
  Vec3 lambda = Vec3::Zero();
};

/// Inverse dynamics through the 6x6 system [E -J'] (u, lambda) = M qdd + (C - Ef) qd.
inline InverseDynamicsConventional inverse_dynamics_conventional(const RobotParams& p, const Vec6& q,
                                                                 const Vec6& qdot, const Vec6& qddot) {
  const Vec6 tau_id = mass_matrix(p, q) * qddot + (coriolis_matrix(p, q, qdot) - friction_matrix(p)) * qdot;
  Mat6 A;
  A << actuation_selector(), -constraint_jacobian(p, q).transpose();
  const Vec6 sol = A.partialPivLu().solve(tau_id);
  return {ControlInput(Vec3(sol.head<3>())), sol.tail<3>()};
}

/// Multiplier-free forward dynamics: solves the block-triangular system
///   [Mbar 0; -M_IIK I] (pdd, phidd) = (u - Cbar pd + Delta' Qp, dM_IIK pd).
inline Vec6 forward_dynamics(const RobotParams& p, const Vec6& q, const Vec6& qdot, const ControlInput& u,
                             const Vec2& fp = Vec2::Zero()) {
  const auto maps = lambda_delta(p, q);
  const Mat6 M = mass_matrix(p, q);
  const Mat6 CmEf = coriolis_matrix(p, q, qdot) - friction_matrix(p);
  const Mat3 iik_dot = iik_matrix_derivative(p, q, qdot);
  Mat63 lambda_dot = Mat63::Zero();
  lambda_dot.bottomRows<3>() = iik_dot;

  const Vec3 twist = qdot.head<3>();
  const Mat63 dT = maps.delta;
  const Mat3 Mbar = dT.transpose() * M * maps.lambda;
  const Vec3 cbar_twist = dT.transpose() * (M * (lambda_dot * twist) + CmEf * (maps.lambda * twist));
  Vec3 rhs = u.vec() - cbar_twist;
  if (fp[0] != 0.0 || fp[1] != 0.0) rhs += dT.transpose() * disturbance_generalized_force(fp);

  Vec6 qddot;
  const Vec3 pdd = Mbar.partialPivLu().solve(rhs);
  qddot << pdd, maps.lambda.bottomRows<3>() * pdd + iik_dot * twist;
  return qddot;
}

/// Forward dynamics through the 9x9 system [[M J'];[J 0]] (qdd, lambda) =
/// (E u + (Ef - C) qd + Qp, -Jdot qd).
inline FwdDynSolution forward_dynamics_conventional(const RobotParams& p, const Vec6& q, const Vec6& qdot,
                                                    const ControlInput& u, const Vec2& fp = Vec2::Zero()) {
  using Mat9 = Eigen::Matrix<double, 9, 9>;
  using Vec9 = Eigen::Matrix<double, 9, 1>;
  const Mat36 J = constraint_jacobian(p, q);
  Mat9 A = Mat9::Zero();
  A.topLeftCorner<6, 6>() = mass_matrix(p, q);
  A.topRightCorner<6, 3>() = J.transpose();
  A.bottomLeftCorner<3, 6>() = J;
  Vec9 b;
  b.head<6>() = actuation_selector() * u.vec() + (friction_matrix(p) - coriolis_matrix(p, q, qdot)) * qdot +
                disturbance_generalized_force(fp);
  b.tail<3>() = -jacobian_time_derivative(p, q, qdot) * qdot;
  const Vec9 sol = A.partialPivLu().solve(b);
  return {sol.head<6>(), sol.tail<3>()};
}

/// State derivative xdot = f(x, u) with x = (q, qdot).
inline Vec12 state_derivative(const RobotParams& p, const RobotState& x, const ControlInput& u,
                              const Vec2& fp = Vec2::Zero()) {
  Vec12 dx;
  dx << x.qdot, forward_dynamics(p, x.q, x.qdot, u, fp);
  return dx;
}

}  // namespace otbot
