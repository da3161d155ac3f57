#pragma once

// Mass matrix, Coriolis matrix and viscous friction of the full robot in
// q = (x, y, alpha, phi_r, phi_l, phi_p).

#include <cmath>

#include "otbot/kinematics.hpp"
#include "otbot/params.hpp"
#include "otbot/types.hpp"

namespace otbot {

/// Symmetric positive-definite mass matrix M(q).
inline Mat6 mass_matrix(const RobotParams& p, const Vec6& q) {
  const double th = chassis_heading(q);
  const double ca = std::cos(q[coord::alpha]), sa = std::sin(q[coord::alpha]);
  const double ct = std::cos(th), st = std::sin(th);

  const double m13 = -p.mp * p.yF * ca - p.mp * p.xF * sa - p.mc * p.yB * ct - p.mc * p.xB * st;
  const double m23 = p.mp * p.xF * ca - p.mp * p.yF * sa + p.mc * p.xB * ct - p.mc * p.yB * st;
  const double m16 = p.mc * p.yB * ct + p.mc * p.xB * st;
  const double m26 = p.mc * p.yB * st - p.mc * p.xB * ct;
  const double chassis_rot = p.mc * (p.xB * p.xB + p.yB * p.yB) + p.Ic;
  const double platform_rot = p.mp * (p.xF * p.xF + p.yF * p.yF) + p.Ip;

  Mat6 M = Mat6::Zero();
  M(0, 0) = M(1, 1) = p.mc + p.mp;
  M(0, 2) = M(2, 0) = m13;
  M(1, 2) = M(2, 1) = m23;
  M(0, 5) = M(5, 0) = m16;
  M(1, 5) = M(5, 1) = m26;
  M(2, 2) = chassis_rot + platform_rot;
  M(2, 5) = M(5, 2) = -chassis_rot;
  M(5, 5) = chassis_rot;
  M(3, 3) = M(4, 4) = p.Ia;
  return M;
}

/// Coriolis/centrifugal matrix C(q, qdot) from the Christoffel symbols of M.
/// Only rows 1-2, columns 3 and 6 are nonzero.
inline Mat6 coriolis_matrix(const RobotParams& p, const Vec6& q, const Vec6& qdot) {
  const double th = chassis_heading(q);
  const double thdot = qdot[coord::alpha] - qdot[coord::phi_p];
  const double adot = qdot[coord::alpha];
  const double ca = std::cos(q[coord::alpha]), sa = std::sin(q[coord::alpha]);
  const double ct = std::cos(th), st = std::sin(th);

  const double chassis_x = p.mc * (p.xB * ct - p.yB * st);
  const double chassis_y = p.mc * (p.yB * ct + p.xB * st);
  const double platform_x = p.mp * (p.xF * ca - p.yF * sa);
  const double platform_y = p.mp * (p.yF * ca + p.xF * sa);

  Mat6 C = Mat6::Zero();
  C(0, 2) = -thdot * chassis_x - adot * platform_x;
  C(1, 2) = -thdot * chassis_y - adot * platform_y;
  C(0, 5) = thdot * chassis_x;
  C(1, 5) = thdot * chassis_y;
  return C;
}

/// Viscous friction matrix Ef: Qf = Ef qdot (non-positive diagonal).
inline Mat6 friction_matrix(const RobotParams& p) {
  Mat6 Ef = Mat6::Zero();
  Ef(3, 3) = -p.bw;
  Ef(4, 4) = -p.bw;
  Ef(5, 5) = -p.bp;
  return Ef;
}

/// Total kinetic energy 1/2 qdot' M(q) qdot.
inline double kinetic_energy(const RobotParams& p, const RobotState& s) {
  return 0.5 * s.qdot.dot(mass_matrix(p, s.q) * s.qdot);
}

}  // namespace otbot
