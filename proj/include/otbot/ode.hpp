#pragma once

// Adaptive Dormand-Prince 5(4) integrator with local extrapolation (the
// 5th-order solution is propagated, the embedded 4th-order one drives the
// step-size control). Steps are never taken across the requested end time,
// so callers can stop exactly on zero-order-hold or event boundaries.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace otbot {

class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double h_min = 1e-12;
  double h_max = std::numeric_limits<double>::infinity();
  long max_steps = 10'000'000;
};

struct OdeStats {
  long steps = 0;       // accepted
  long rejections = 0;
  long evaluations = 0;
};

namespace dp45 {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// Difference between the 5th- and 4th-order weights.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dp45

template <int N>
class DormandPrince45 {
 public:
  using State = Eigen::Matrix<double, N, 1>;

  explicit DormandPrince45(OdeOptions opts = {}) : opts_(opts) {
    if (!(opts_.rtol > 0.0) || !(opts_.atol > 0.0)) throw std::invalid_argument("tolerances must be positive");
  }

  const OdeOptions& options() const { return opts_; }
  const OdeStats& stats() const { return stats_; }

  /// Advances (t, y) to exactly t_end under dy/dt = f(t, y). The step-size
  /// proposal is kept between calls so piecewise integration stays cheap.
  template <class F>
  void advance(F&& f, double& t, State& y, double t_end) {
    if (t_end < t) throw std::invalid_argument("advance: t_end before t");
    if (t_end == t) return;
    State k1 = f(t, y);
    ++stats_.evaluations;
    if (h_ <= 0.0) h_ = initial_step(f, t, y, k1, t_end - t);

    State k2, k3, k4, k5, k6, k7, ytmp, y_new, err;
    long local_steps = 0;
    while (t < t_end) {
      if (++local_steps > opts_.max_steps) throw IntegrationError("integrator: too many steps");
      double h = std::min({h_, opts_.h_max, t_end - t});
      const bool clipped = h < h_;
      // Absorb a sliver that would leave a tiny final step.
      if (t + h >= t_end || t_end - (t + h) < 1e-12 * std::max(1.0, std::abs(t_end))) h = t_end - t;

      using namespace dp45;
      ytmp = y + h * a21 * k1;
      k2 = f(t + c2 * h, ytmp);
      ytmp = y + h * (a31 * k1 + a32 * k2);
      k3 = f(t + c3 * h, ytmp);
      ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
      k4 = f(t + c4 * h, ytmp);
      ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      k5 = f(t + c5 * h, ytmp);
      ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      k6 = f(t + h, ytmp);
      y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      k7 = f(t + h, y_new);
      stats_.evaluations += 6;
      err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      const double en = error_norm(err, y, y_new);
      if (!std::isfinite(en)) {
        ++stats_.rejections;
        h_ = 0.25 * h;
        if (h_ < opts_.h_min) throw IntegrationError("integrator: non-finite state at t = " + std::to_string(t));
        continue;
      }
      if (en <= 1.0) {
        t = (h == t_end - t) ? t_end : t + h;
        y = y_new;
        k1 = k7;
        ++stats_.steps;
        const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
        // A step shortened to land on t_end says nothing about the admissible
        // size unless it still had to shrink.
        if (!clipped || fac < 1.0) h_ = h * fac;
      } else {
        ++stats_.rejections;
        h_ = h * std::max(0.2, 0.9 * std::pow(en, -0.2));
        if (h_ < opts_.h_min)
          throw IntegrationError("integrator: step size underflow at t = " + std::to_string(t));
      }
    }
  }

 private:
  double error_norm(const State& err, const State& y0, const State& y1) const {
    const auto scale = (opts_.atol + opts_.rtol * y0.cwiseAbs().cwiseMax(y1.cwiseAbs()).array());
    return std::sqrt((err.array() / scale).square().mean());
  }

  // Hairer-Norsett-Wanner starting step heuristic.
  template <class F>
  double initial_step(F& f, double t, const State& y, const State& k1, double span) {
    const auto scale = (opts_.atol + opts_.rtol * y.cwiseAbs().array());
    const double d0 = std::sqrt((y.array() / scale).square().mean());
    const double d1 = std::sqrt((k1.array() / scale).square().mean());
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, span);
    const State y1 = y + h0 * k1;
    const State k = f(t + h0, y1);
    ++stats_.evaluations;
    const double d2 = std::sqrt(((k - k1).array() / scale).square().mean()) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min({100.0 * h0, h1, span});
  }

  OdeOptions opts_;
  OdeStats stats_;
  double h_ = 0.0;
};

}  // namespace otbot
