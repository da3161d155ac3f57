#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "oracle.hpp"
#include "otbot/inertia.hpp"

using namespace otbot;
using oracle::max_abs;

TEST(MassMatrix, NominalTotalMass) {
  const Mat6 M = mass_matrix(RobotParams::nominal(), Vec6::Zero());
  EXPECT_NEAR(M(0, 0), 131.09, 1e-12);
  EXPECT_NEAR(M(1, 1), 131.09, 1e-12);
  EXPECT_EQ(M(3, 3), RobotParams::nominal().Ia);
  EXPECT_EQ(M(4, 4), RobotParams::nominal().Ia);
}

TEST(MassMatrix, CentredMassesDecouple) {
  oracle::Sampler s(20);
  auto p = s.params();
  p.xB = p.yB = p.xF = p.yF = 0.0;
  const Mat6 M = mass_matrix(p, s.config());
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 6; ++j)
      if (j != i) {
        EXPECT_EQ(M(i, j), 0.0);
        EXPECT_EQ(M(j, i), 0.0);
      }
  EXPECT_EQ(M(2, 5), -p.Ic);
}

TEST(MassMatrix, SymmetricPositiveDefinite) {
  oracle::Sampler s(21);
  for (int i = 0; i < 1000; ++i) {
    const auto p = s.params();
    const Mat6 M = mass_matrix(p, s.config());
    EXPECT_EQ(M, M.transpose());
    Eigen::SelfAdjointEigenSolver<Mat6> es(M);
    EXPECT_GT(es.eigenvalues().minCoeff(), 1e-10);
  }
}

TEST(MassMatrix, AgreesWithKineticEnergyOracle) {
  oracle::Sampler s(22);
  for (int i = 0; i < 200; ++i) {
    const auto p = s.params();
    const Vec6 q = s.config();
    EXPECT_LT(oracle::rel_err(mass_matrix(p, q), oracle::mass_matrix(p, q)), 1e-12);
    const Vec6 qd = s.vec6(3.0);
    EXPECT_NEAR(kinetic_energy(p, RobotState(q, qd)), oracle::kinetic_energy(p, q, qd),
                1e-10 * std::max(1.0, oracle::kinetic_energy(p, q, qd)));
  }
}

TEST(Coriolis, ZeroAtRest) {
  oracle::Sampler s(23);
  EXPECT_EQ(max_abs(coriolis_matrix(s.params(), s.config(), Vec6::Zero())), 0.0);
}

TEST(Coriolis, SparsityPattern) {
  oracle::Sampler s(24);
  const Mat6 C = coriolis_matrix(s.params(), s.config(), s.vec6(3.0));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      if (!(i < 2 && (j == 2 || j == 5))) {
        EXPECT_EQ(C(i, j), 0.0) << i << "," << j;
      }
}

TEST(Coriolis, AgreesWithChristoffelOracle) {
  oracle::Sampler s(25);
  for (int i = 0; i < 100; ++i) {
    const auto p = i % 2 ? s.params() : RobotParams::nominal();
    const Vec6 q = s.config();
    const Vec6 qd = s.vec6(3.0);
    EXPECT_LT(oracle::rel_err(coriolis_matrix(p, q, qd), oracle::coriolis_matrix(p, q, qd)), 1e-7);
  }
}

TEST(Coriolis, LinearInVelocity) {
  oracle::Sampler s(26);
  const auto p = s.params();
  const Vec6 q = s.config();
  for (int i = 0; i < 50; ++i) {
    const Vec6 a = s.vec6(3.0), b = s.vec6(3.0);
    const double ka = s.uniform(-2, 2), kb = s.uniform(-2, 2);
    const Mat6 lhs = coriolis_matrix(p, q, ka * a + kb * b);
    const Mat6 rhs = ka * coriolis_matrix(p, q, a) + kb * coriolis_matrix(p, q, b);
    EXPECT_LT(max_abs(lhs - rhs), 1e-12 * std::max(1.0, max_abs(lhs)));
  }
}

TEST(Coriolis, MdotMinusTwoCSkewSymmetric) {
  oracle::Sampler s(27);
  const double h = 1e-6;
  for (int i = 0; i < 1000; ++i) {
    const auto p = s.params();
    const Vec6 q = s.config();
    const Vec6 qd = s.vec6(3.0);
    const Mat6 Md = (mass_matrix(p, q + h * qd) - mass_matrix(p, q - h * qd)) / (2 * h);
    const Mat6 N = Md - 2 * coriolis_matrix(p, q, qd);
    EXPECT_LT(max_abs(N + N.transpose()), 1e-6);
  }
}

TEST(Friction, DiagonalNonPositive) {
  const Mat6 Ef = friction_matrix(RobotParams::nominal());
  Vec6 d;
  d << 0, 0, 0, -0.18, -0.18, -0.24;
  EXPECT_EQ(Ef, Mat6(d.asDiagonal()));
}
