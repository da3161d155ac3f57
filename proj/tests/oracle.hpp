#pragma once

// Independent reference computations used by the unit tests. Nothing here
// calls the library's matrix builders.

#include <cmath>
#include <random>

#include "otbot/kinematics.hpp"
#include "otbot/params.hpp"
#include "otbot/types.hpp"

namespace oracle {

using namespace otbot;

// Translational kinetic energy of a point mass m at body coordinates (c, d)
// on a body whose origin moves at (xd, yd) with heading th and rate thd.
inline double point_mass_energy(double c, double d, double m, double xd, double yd, double th, double thd) {
  const double ct = std::cos(th), st = std::sin(th);
  const double rx = ct * c - st * d, ry = st * c + ct * d;
  const double vx = xd - thd * ry, vy = yd + thd * rx;
  return 0.5 * m * (vx * vx + vy * vy);
}

// Total kinetic energy from the per-body formulas: chassis and platform
// translate with the pivot, rotate with theta and alpha; wheels spin.
inline double kinetic_energy(const RobotParams& p, const Vec6& q, const Vec6& qd) {
  const double th = q[2] - q[5], thd = qd[2] - qd[5];
  double t = point_mass_energy(p.xB, p.yB, p.mc, qd[0], qd[1], th, thd);
  t += point_mass_energy(p.xF, p.yF, p.mp, qd[0], qd[1], q[2], qd[2]);
  t += 0.5 * p.Ic * thd * thd + 0.5 * p.Ia * qd[3] * qd[3] + 0.5 * p.Ia * qd[4] * qd[4] + 0.5 * p.Ip * qd[2] * qd[2];
  return t;
}

// T = 1/2 qd' M qd is quadratic, so polarization gives M exactly.
inline Mat6 mass_matrix(const RobotParams& p, const Vec6& q) {
  Mat6 M;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const Vec6 ei = Vec6::Unit(i), ej = Vec6::Unit(j);
      M(i, j) = kinetic_energy(p, q, ei + ej) - kinetic_energy(p, q, ei) - kinetic_energy(p, q, ej);
    }
  return M;
}

// C_ij = 1/2 sum_k (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qd_k, central differences.
inline Mat6 coriolis_matrix(const RobotParams& p, const Vec6& q, const Vec6& qd, double h = 1e-6) {
  Mat6 dM[6];
  for (int k = 0; k < 6; ++k) {
    const Vec6 dq = h * Vec6::Unit(k);
    dM[k] = (mass_matrix(p, q + dq) - mass_matrix(p, q - dq)) / (2 * h);
  }
  Mat6 C = Mat6::Zero();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = 0; k < 6; ++k) C(i, j) += 0.5 * (dM[k](i, j) + dM[j](i, k) - dM[i](j, k)) * qd[k];
  return C;
}

// Rolling constraints written directly from wheel-contact velocities: the
// contact points of both wheels have zero velocity along the axle and the
// wheel-plane velocity matches r phidot.
inline Eigen::Vector3d rolling_residual(const RobotParams& p, const Vec6& q, const Vec6& qd) {
  const double th = q[2] - q[5], thd = qd[2] - qd[5];
  const double c = std::cos(th), s = std::sin(th);
  // Axle midpoint M = P - l1 (c, s).
  const double mx = qd[0] + p.l1 * s * thd, my = qd[1] - p.l1 * c * thd;
  const double forward = c * mx + s * my;
  const double lateral = -s * mx + c * my;
  const double vr = forward + p.l2 * thd, vl = forward - p.l2 * thd;
  return {lateral, vr - p.r * qd[3], vl - p.r * qd[4]};
}

struct Sampler {
  std::mt19937_64 rng;
  explicit Sampler(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

  Vec6 config() {
    Vec6 q;
    q << uniform(-5, 5), uniform(-5, 5), uniform(-10, 10), uniform(-50, 50), uniform(-50, 50), uniform(-10, 10);
    return q;
  }
  Vec3 vec3(double scale) { return {uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)}; }
  Vec6 vec6(double scale) {
    Vec6 v;
    for (int i = 0; i < 6; ++i) v[i] = uniform(-scale, scale);
    return v;
  }

  RobotParams params() {
    RobotParams p;
    p.l1 = uniform(0.05, 0.5);
    p.l2 = uniform(0.1, 0.4);
    p.r = uniform(0.03, 0.2);
    p.xB = uniform(-0.3, 0.3);
    p.yB = uniform(-0.3, 0.3);
    p.xF = uniform(-0.3, 0.3);
    p.yF = uniform(-0.3, 0.3);
    p.mc = uniform(10, 200);
    p.mp = uniform(5, 300);
    p.Ic = uniform(0.1, 5);
    p.Ip = uniform(0.1, 20);
    p.Ia = uniform(1e-3, 5e-2);
    p.bw = uniform(0, 1);
    p.bp = uniform(0, 1);
    return p;
  }

  // Admissible velocity from random motor speeds through Delta.
  Vec6 admissible_qdot(const RobotParams& p, const Vec6& q, double scale = 5.0) {
    return lambda_delta(p, q).delta * vec3(scale);
  }
};

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return max_abs(a - b) / std::max(1.0, std::max(max_abs(a), max_abs(b)));
}

}  // namespace oracle
