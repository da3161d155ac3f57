#pragma once

// Computed-torque tracking on the task-space model
//   u = Mbar (pdd_d - Kp e_p - Kv e_v) + Cbar pd,
// pole-placement tuning of the PD gains, closed-loop simulation under a
// zero-order-hold controller, planner-trajectory replay and interval bounds
// on the commanded torques.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "otbot/config.hpp"
#include "otbot/csv.hpp"
#include "otbot/dynamics.hpp"
#include "otbot/interval.hpp"
#include "otbot/ode.hpp"
#include "otbot/simulator.hpp"

namespace otbot {

// ---------------------------------------------------------------------------
// References

/// Desired pose, twist and acceleration of the platform at one instant.
struct RefSample {
  Vec3 p = Vec3::Zero();
  Vec3 pd = Vec3::Zero();
  Vec3 pdd = Vec3::Zero();
};

/// p_d(t) with its first two derivatives on [t_begin, t_end]. Piecewise
/// references are right-continuous; `breaks` lists the instants where pd or
/// pdd jump.
class ReferenceTrajectory {
 public:
  using Fn = std::function<RefSample(double)>;

  ReferenceTrajectory() = default;
  ReferenceTrajectory(std::string name, double t_begin, double t_end, Fn fn, std::vector<double> breaks = {})
      : name_(std::move(name)), t_begin_(t_begin), t_end_(t_end), fn_(std::move(fn)), breaks_(std::move(breaks)) {
    if (!(t_end_ > t_begin_)) throw std::invalid_argument("reference: empty horizon");
    if (!fn_) throw std::invalid_argument("reference: no signal");
  }

  const std::string& name() const { return name_; }
  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  const std::vector<double>& breaks() const { return breaks_; }

  RefSample at(double t) const {
    if (t < t_begin_ - 1e-9 || t > t_end_ + 1e-9)
      throw std::out_of_range("reference '" + name_ + "' undefined at t = " + std::to_string(t));
    return fn_(t);
  }

 private:
  std::string name_;
  double t_begin_ = 0.0;
  double t_end_ = 0.0;
  Fn fn_;
  std::vector<double> breaks_;
};

/// Piecewise-straight path at constant speed, alpha held at zero, then a hold
/// at the last corner until t_end.
struct CorridorSpec {
  double speed = 0.6;
  double segment = 3.0;
  std::vector<Vec2> directions{{1, 0}, {0, 1}, {1, 0}, {0, -1}, {1, 0}};
  double t_end = 30.0;
};

inline ReferenceTrajectory corridor_reference(const CorridorSpec& c) {
  if (!(c.speed > 0.0) || !(c.segment > 0.0) || c.directions.empty())
    throw std::invalid_argument("corridor: speed, segment and directions must be positive/non-empty");
  const double leg = c.segment / c.speed;
  std::vector<Vec2> starts{Vec2::Zero()};
  for (const auto& d : c.directions) starts.push_back(starts.back() + c.segment * d.normalized());
  std::vector<double> breaks;
  for (std::size_t k = 1; k <= c.directions.size(); ++k)
    if (k * leg < c.t_end) breaks.push_back(static_cast<double>(k) * leg);

  auto fn = [c, leg, starts](double t) {
    RefSample r;
    const double kf = std::floor(t / leg + 1e-12);
    if (kf >= static_cast<double>(c.directions.size())) {
      r.p.head<2>() = starts.back();
      return r;
    }
    const auto k = static_cast<std::size_t>(std::max(kf, 0.0));
    const Vec2 d = c.directions[k].normalized();
    r.p.head<2>() = starts[k] + c.speed * (t - static_cast<double>(k) * leg) * d;
    r.pd.head<2>() = c.speed * d;
    return r;
  };
  return {"corridor", 0.0, c.t_end, fn, breaks};
}

/// Figure-8 made of two circles of the given radius centred at (+-offset, 0)
/// and the two straight segments tangent to both, crossing at the origin.
/// Travelled at constant speed, one lap per period, starting at the origin
/// towards the right circle. alpha is held constant.
struct Figure8Spec {
  double radius = 2.0;
  double offset = 4.0;
  double period = 18.0;
  double alpha = 0.0;
  double t_end = 18.0;
};

namespace detail {

struct PathPiece {
  bool arc = false;
  double length = 0.0;
  Vec2 start = Vec2::Zero();  // lines
  Vec2 dir = Vec2::Zero();
  Vec2 center = Vec2::Zero();  // arcs
  double phi0 = 0.0;
  double turn = 1.0;  // +1 counter-clockwise
};

inline std::vector<PathPiece> figure8_pieces(const Figure8Spec& f) {
  const double R = f.radius, c = f.offset;
  const double beta = std::asin(R / c);  // slope of the crossing tangents
  const double ls = c * std::cos(beta);  // origin to tangent point
  // Each circle is left and entered along the crossing tangents, so the arc
  // between the two tangent points spans pi + 2 beta.
  const double arc = std::numbers::pi + 2.0 * beta;
  const Vec2 up(std::cos(beta), std::sin(beta));
  const Vec2 down(-std::cos(beta), std::sin(beta));
  std::vector<PathPiece> v;
  PathPiece p;
  p.start = Vec2::Zero();
  p.dir = up;
  p.length = ls;
  v.push_back(p);
  // Right circle, clockwise from the upper tangent point.
  p = PathPiece{};
  p.arc = true;
  p.center = Vec2(c, 0);
  p.phi0 = std::numbers::pi - (std::numbers::pi / 2.0 - beta);
  p.turn = -1.0;
  p.length = R * arc;
  v.push_back(p);
  p = PathPiece{};
  p.start = Vec2(c * std::cos(beta) * std::cos(beta), -c * std::cos(beta) * std::sin(beta));
  p.dir = down;
  p.length = 2.0 * ls;
  v.push_back(p);
  // Left circle, counter-clockwise from its upper tangent point.
  p = PathPiece{};
  p.arc = true;
  p.center = Vec2(-c, 0);
  p.phi0 = std::numbers::pi / 2.0 - beta;
  p.turn = 1.0;
  p.length = R * arc;
  v.push_back(p);
  p = PathPiece{};
  p.start = Vec2(-c * std::cos(beta) * std::cos(beta), -c * std::cos(beta) * std::sin(beta));
  p.dir = up;
  p.length = ls;
  v.push_back(p);
  return v;
}

}  // namespace detail

inline double figure8_length(const Figure8Spec& f) {
  double L = 0.0;
  for (const auto& p : detail::figure8_pieces(f)) L += p.length;
  return L;
}

inline ReferenceTrajectory figure8_reference(const Figure8Spec& f) {
  if (!(f.radius > 0.0) || !(f.offset > f.radius) || !(f.period > 0.0))
    throw std::invalid_argument("figure8: need 0 < radius < offset and period > 0");
  const auto pieces = detail::figure8_pieces(f);
  const double L = figure8_length(f);
  const double v = L / f.period;
  std::vector<double> breaks;
  for (double lap = 0.0; lap < f.t_end; lap += f.period) {
    double s = 0.0;
    for (const auto& p : pieces) {
      s += p.length;
      const double t = lap + s / v;
      if (t > 0.0 && t < f.t_end) breaks.push_back(t);
    }
  }

  auto fn = [pieces, L, v, f](double t) {
    double s = std::fmod(v * t, L);
    if (s < 0.0) s += L;
    std::size_t k = 0;
    while (k + 1 < pieces.size() && s >= pieces[k].length * (1.0 - 1e-12)) {
      s -= pieces[k].length;
      ++k;
    }
    s = std::max(s, 0.0);
    const auto& p = pieces[k];
    RefSample r;
    r.p[2] = f.alpha;
    if (!p.arc) {
      r.p.head<2>() = p.start + s * p.dir;
      r.pd.head<2>() = v * p.dir;
    } else {
      const double phi = p.phi0 + p.turn * s / (f.radius);
      const Vec2 radial(std::cos(phi), std::sin(phi));
      r.p.head<2>() = p.center + f.radius * radial;
      r.pd.head<2>() = v * p.turn * Vec2(-radial[1], radial[0]);
      r.pdd.head<2>() = -(v * v / f.radius) * radial;
    }
    return r;
  };
  return {"figure8", 0.0, f.t_end, fn, breaks};
}

/// Smooth weaving path used to generate planner-like trajectories: the
/// forward coordinate ramps from rest to a cruise speed with a cubic speed
/// profile, y weaves sinusoidally with x and alpha swings as
/// a (1 - cos w t).
struct WeaveSpec {
  double cruise_speed = 0.8;
  double ramp = 2.0;
  double amplitude = 0.5;
  double wavelength = 4.0;
  double alpha_amplitude = 0.2;
  double alpha_rate = 0.5;
  double t_end = 12.0;
};

inline ReferenceTrajectory weave_reference(const WeaveSpec& w) {
  if (!(w.ramp > 0.0) || !(w.wavelength > 0.0)) throw std::invalid_argument("weave: ramp and wavelength must be > 0");
  auto fn = [w](double t) {
    const double V = w.cruise_speed, T = w.ramp;
    double s, sd, sdd;
    if (t < T) {
      const double tau = std::max(t, 0.0) / T;
      s = V * T * (tau * tau * tau - 0.5 * tau * tau * tau * tau);
      sd = V * (3.0 * tau * tau - 2.0 * tau * tau * tau);
      sdd = V / T * (6.0 * tau - 6.0 * tau * tau);
    } else {
      s = 0.5 * V * T + V * (t - T);
      sd = V;
      sdd = 0.0;
    }
    const double k = 2.0 * std::numbers::pi / w.wavelength;
    const double A = w.amplitude, sn = std::sin(k * s), cs = std::cos(k * s);
    const double b = w.alpha_amplitude, om = w.alpha_rate;
    RefSample r;
    r.p << s, A * sn, b * (1.0 - std::cos(om * t));
    r.pd << sd, A * k * cs * sd, b * om * std::sin(om * t);
    r.pdd << sdd, -A * k * k * sn * sd * sd + A * k * cs * sdd, b * om * om * std::cos(om * t);
    return r;
  };
  return {"weave", 0.0, w.t_end, fn};
}

/// Reference reconstructed from sampled poses: pd by central differences,
/// pdd by second differences (one-sided at the ends), held constant over each
/// sample interval; p and pd are propagated from the sample with that pdd.
inline ReferenceTrajectory sampled_reference(const std::vector<double>& times, const std::vector<Vec3>& poses,
                                             std::string name = "sampled") {
  const std::size_t n = times.size();
  if (n < 3 || poses.size() != n) throw std::invalid_argument("sampled reference: need >= 3 matching samples");
  const double h = times[1] - times[0];
  if (!(h > 0.0)) throw std::invalid_argument("sampled reference: times must increase");
  std::vector<Vec3> v(n), a(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0)
      v[k] = (poses[1] - poses[0]) / h;
    else if (k == n - 1)
      v[k] = (poses[n - 1] - poses[n - 2]) / h;
    else
      v[k] = (poses[k + 1] - poses[k - 1]) / (2.0 * h);
    const std::size_t c = std::clamp<std::size_t>(k, 1, n - 2);
    a[k] = (poses[c + 1] - 2.0 * poses[c] + poses[c - 1]) / (h * h);
  }
  const double t0 = times.front();
  std::vector<double> breaks(times.begin() + 1, times.end() - 1);
  auto fn = [t0, h, n, poses, v, a](double t) {
    const double kf = std::floor((t - t0) / h + 1e-9);
    const auto k = static_cast<std::size_t>(std::clamp(kf, 0.0, static_cast<double>(n - 1)));
    const double tau = t - (t0 + static_cast<double>(k) * h);
    RefSample r;
    r.pdd = a[k];
    r.pd = v[k] + tau * a[k];
    r.p = poses[k] + tau * v[k] + 0.5 * tau * tau * a[k];
    return r;
  };
  return {std::move(name), t0, times.back(), fn, breaks};
}

inline ReferenceTrajectory plan_reference(const PlanData& plan) {
  std::vector<Vec3> poses;
  poses.reserve(plan.states.size());
  for (const auto& s : plan.states) poses.push_back(s.pose());
  return sampled_reference(plan.times, poses, "plan");
}

// ---------------------------------------------------------------------------
// Gains

/// Diagonal PD gains with the poles they place on each axis.
struct Gains {
  Vec3 kp = Vec3::Zero();
  Vec3 kv = Vec3::Zero();
  Vec3 s1 = Vec3::Zero();  // slow pole
  Vec3 s2 = Vec3::Zero();  // fast pole
  Vec3 tstab = Vec3::Zero();

  Mat3 Kp() const { return kp.asDiagonal(); }
  Mat3 Kv() const { return kv.asDiagonal(); }

  /// Matrix of the per-axis error ODE  d/dt (e, edot) = C (e, edot).
  Eigen::Matrix2d error_matrix(int axis) const {
    Eigen::Matrix2d C;
    C << 0.0, 1.0, -kp[axis], -kv[axis];
    return C;
  }
};

/// s1 = -4/Tstab, s2 = 10 s1, kp = s1 s2, kv = -(s1 + s2): errors fall below
/// 2% of their slow-mode component after Tstab.
inline Gains tune_gains(const Vec3& tstab) {
  if (!(tstab.array() > 0.0).all()) throw std::invalid_argument("tune_gains: Tstab must be > 0 on every axis");
  Gains g;
  g.tstab = tstab;
  g.s1 = -4.0 * tstab.cwiseInverse();
  g.s2 = 10.0 * g.s1;
  g.kp = g.s1.cwiseProduct(g.s2);
  g.kv = -(g.s1 + g.s2);
  return g;
}

inline Gains tune_gains(double tstab) { return tune_gains(Vec3::Constant(tstab)); }

/// Gains from a `[gains]` section: either `tstab` (one or three values) or
/// explicit `kp` and `kv` lists.
inline Gains gains_from_config(const Config& cfg, const std::string& section = "gains") {
  auto vec3 = [&](const std::string& key) {
    const auto v = cfg.get_list(key);
    if (v.size() == 1) return Vec3::Constant(v[0]).eval();
    if (v.size() == 3) return Vec3(v[0], v[1], v[2]);
    throw ConfigError(cfg.origin() + ": key '" + key + "' needs 1 or 3 values");
  };
  const std::string p = section.empty() ? "" : section + ".";
  if (cfg.has(p + "kp") || cfg.has(p + "kv")) {
    Gains g;
    g.kp = vec3(p + "kp");
    g.kv = vec3(p + "kv");
    if (!(g.kp.array() > 0.0).all() || !(g.kv.array() > 0.0).all())
      throw ConfigError(cfg.origin() + ": gains must be positive");
    for (int i = 0; i < 3; ++i) {
      const Eigen::Vector2cd ev = g.error_matrix(i).eigenvalues();
      g.s1[i] = std::max(ev[0].real(), ev[1].real());
      g.s2[i] = std::min(ev[0].real(), ev[1].real());
      g.tstab[i] = -4.0 / g.s1[i];
    }
    return g;
  }
  return tune_gains(cfg.has(p + "tstab") ? vec3(p + "tstab") : Vec3::Constant(3.0));
}

// ---------------------------------------------------------------------------
// Control law

/// Where the controller reads the platform twist from: the state's
/// (xdot, ydot, alphadot), or the motor speeds mapped through the forward
/// kinematics as a robot with wheel and pivot encoders would.
enum class TwistSource { state, motor_speeds };

struct TorqueSplit {
  ControlInput u;
  Vec3 u_traj = Vec3::Zero();  // Mbar pdd_d + Cbar pd
  Vec3 u_corr = Vec3::Zero();  // Mbar (-Kp e_p - Kv e_v)
  Vec3 v = Vec3::Zero();       // commanded task-space acceleration
  Vec3 ep = Vec3::Zero();
  Vec3 ev = Vec3::Zero();
};

inline TorqueSplit computed_torque(const RobotParams& p, const RobotState& s, const RefSample& ref, const Gains& g,
                                   TwistSource src = TwistSource::state) {
  Vec6 qdot = s.qdot;
  if (src == TwistSource::motor_speeds) qdot = lambda_delta(p, s.q).delta * s.motor_speeds();
  const Vec3 pd = qdot.head<3>();
  const auto ts = task_space_model(p, s.q, qdot);
  TorqueSplit out;
  out.ep = s.pose() - ref.p;
  out.ev = pd - ref.pd;
  const Vec3 fb = -g.kp.cwiseProduct(out.ep) - g.kv.cwiseProduct(out.ev);
  out.v = ref.pdd + fb;
  out.u_traj = ts.Mbar * ref.pdd + ts.Cbar * pd;
  out.u_corr = ts.Mbar * fb;
  out.u = ControlInput(Vec3(out.u_traj + out.u_corr));
  return out;
}

// ---------------------------------------------------------------------------
// Closed loop

struct TrackingErrors {
  std::vector<double> times;
  std::vector<Vec3> ep;
  std::vector<Vec3> ev;
};

struct ClosedLoopOptions {
  double control_rate = 1000.0;  // Hz, zero-order hold on u
  OdeOptions ode{};
  TwistSource twist = TwistSource::state;
  DisturbanceSchedule disturbance;
  std::optional<Vec3> torque_limit;
};

struct ClosedLoopResult {
  SimTrajectory traj;
  TrackingErrors errors;
  std::vector<Vec3> u_traj;
  std::vector<Vec3> u_corr;
};

/// Simulates the robot under the computed-torque law sampled at
/// `control_rate`. Errors and the torque split are reported at every control
/// tick.
inline ClosedLoopResult closed_loop_simulate(const RobotParams& params, const RobotState& x0,
                                             const ReferenceTrajectory& ref, const Gains& gains, double t_end,
                                             const ClosedLoopOptions& opts = {}) {
  if (!(opts.control_rate > 0.0)) throw std::invalid_argument("closed loop: control rate must be > 0");
  if (t_end > ref.t_end() + 1e-9) throw std::invalid_argument("closed loop: horizon exceeds the reference");
  auto policy = [&](double t, const RobotState& s) {
    ControlInput u = computed_torque(params, s, ref.at(t), gains, opts.twist).u;
    if (opts.torque_limit) u = u.clamped(*opts.torque_limit);
    return u;
  };
  ClosedLoopResult res;
  res.traj = simulate_zoh(params, x0, ref.t_begin(), 1.0 / opts.control_rate, t_end, policy, opts.disturbance,
                          opts.ode);
  const std::size_t n = res.traj.size();
  res.errors.times = res.traj.times;
  res.errors.ep.reserve(n);
  res.errors.ev.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto split = computed_torque(params, res.traj.states[k], ref.at(res.traj.times[k]), gains, opts.twist);
    res.errors.ep.push_back(split.ep);
    res.errors.ev.push_back(split.ev);
    res.u_traj.push_back(split.u_traj);
    res.u_corr.push_back(split.u_corr);
  }
  return res;
}

/// Admissible state on the reference at its start time, with the given
/// wheel and pivot angles.
inline RobotState state_on_reference(const RobotParams& p, const ReferenceTrajectory& ref,
                                     const Vec3& joints = Vec3::Zero()) {
  const RefSample r = ref.at(ref.t_begin());
  Vec6 q;
  q << r.p, joints;
  return {q, admissible_velocity(p, q, r.pd)};
}

inline std::vector<double> planar_norm(const std::vector<Vec3>& v) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(e.head<2>().norm());
  return out;
}

inline std::vector<double> component(const std::vector<Vec3>& v, int i) {
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) out.push_back(e[i]);
  return out;
}

/// Transient metric on a non-negative error signal over [t_from, t_to]: the
/// peak, and the time after t_from from which the signal stays below
/// `fraction` of that peak until t_to.
struct Settling {
  double t_from = 0.0;
  double peak = 0.0;
  double peak_time = 0.0;
  double time = std::numeric_limits<double>::quiet_NaN();
  bool settled = false;
};

inline Settling settling_after(const std::vector<double>& times, const std::vector<double>& values, double t_from,
                               double t_to, double fraction = 0.02) {
  if (times.size() != values.size()) throw std::invalid_argument("settling: size mismatch");
  Settling s;
  s.t_from = t_from;
  std::size_t first = times.size(), last = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_from - 1e-9 || times[k] > t_to + 1e-9) continue;
    first = std::min(first, k);
    last = k;
    if (std::abs(values[k]) > s.peak) {
      s.peak = std::abs(values[k]);
      s.peak_time = times[k];
    }
  }
  if (first == times.size()) throw std::invalid_argument("settling: empty window");
  if (s.peak == 0.0) {
    s.time = 0.0;
    s.settled = true;
    return s;
  }
  const double thr = fraction * s.peak;
  std::size_t k = last + 1;
  while (k > first && std::abs(values[k - 1]) <= thr) --k;
  // k is the first index of the final run below the threshold.
  if (k > last) return s;
  s.settled = true;
  s.time = times[k] - t_from;
  return s;
}

// ---------------------------------------------------------------------------
// Planner trajectories

/// Builds a planner-style (x_k, u_k) sequence: the states come from tracking
/// `ref` with the true model under a controller sampled at the plan rate;
/// the actions are what the same controller computes with `action_params`.
/// With action_params == params the plan is self-consistent.
inline PlanData generate_plan(const RobotParams& params, const ReferenceTrajectory& ref, const Gains& gains,
                              double dt, const RobotParams& action_params, const OdeOptions& ode = {}) {
  std::vector<ControlInput> actions;
  auto policy = [&](double t, const RobotState& s) {
    const RefSample r = ref.at(t);
    actions.push_back(computed_torque(action_params, s, r, gains).u);
    return computed_torque(params, s, r, gains).u;
  };
  const RobotState x0 = state_on_reference(params, ref);
  const auto traj = simulate_zoh(params, x0, ref.t_begin(), dt, ref.t_end(), policy, {}, ode);
  PlanData plan;
  const auto ticks = detail::uniform_grid(ref.t_begin(), dt, ref.t_end());
  for (std::size_t k = 0; k < ticks.size(); ++k) {
    plan.times.push_back(ticks[k]);
    plan.states.push_back(traj.states[traj.index_of(ticks[k])]);
    plan.inputs.push_back(actions[k]);
  }
  return plan;
}

inline SimTrajectory plan_as_trajectory(const PlanData& plan) {
  SimTrajectory t;
  t.times = plan.times;
  t.states = plan.states;
  t.inputs = plan.inputs;
  return t;
}

struct ReplayResult {
  SimTrajectory traj;
  std::vector<double> drift;  // planar distance to the planned pivot position
  double max_drift = 0.0;
  double final_drift = 0.0;
};

/// Applies the planned actions under zero-order hold from the first planned
/// state and measures the drift from the planned positions.
inline ReplayResult open_loop_replay(const RobotParams& params, const PlanData& plan, const OdeOptions& ode = {}) {
  if (plan.times.size() < 2) throw std::invalid_argument("replay: plan needs at least two samples");
  ControlSequence cs;
  cs.t0 = plan.times.front();
  cs.dt = plan.times[1] - plan.times[0];
  cs.samples = plan.inputs;
  ReplayResult r;
  r.traj = integrate(params, plan.states.front(), cs, plan.times.back(), ode, {}, plan.times);
  for (std::size_t k = 0; k < plan.times.size(); ++k) {
    const auto& s = r.traj.states[r.traj.index_of(plan.times[k])];
    const double d = (s.q.head<2>() - plan.states[k].q.head<2>()).norm();
    r.drift.push_back(d);
    r.max_drift = std::max(r.max_drift, d);
  }
  r.final_drift = r.drift.back();
  return r;
}

/// Closed-loop tracking of the planned states, started at the first one.
inline ClosedLoopResult track_planned_trajectory(const RobotParams& params, const PlanData& plan, const Gains& gains,
                                                 const ClosedLoopOptions& opts = {}) {
  const auto ref = plan_reference(plan);
  return closed_loop_simulate(params, plan.states.front(), ref, gains, ref.t_end(), opts);
}

// ---------------------------------------------------------------------------
// Torque feasibility

using IntervalVec = std::array<Interval, 3>;

/// Boxes of assumed tracking errors around the reference.
struct ErrorBoxes {
  IntervalVec ep{};
  IntervalVec ev{};

  static ErrorBoxes symmetric(const Vec3& ep_radius, const Vec3& ev_radius) {
    ErrorBoxes b;
    for (int i = 0; i < 3; ++i) {
      b.ep[i] = Interval::symmetric(ep_radius[i]);
      b.ev[i] = Interval::symmetric(ev_radius[i]);
    }
    return b;
  }
};

struct TorqueBounds {
  IntervalVec limits{Interval::symmetric(50.0), Interval::symmetric(50.0), Interval::symmetric(50.0)};
  ErrorBoxes boxes;

  void validate() const {
    for (int i = 0; i < 3; ++i)
      if (!boxes.ep[i].contains(0.0) || !boxes.ev[i].contains(0.0))
        throw std::invalid_argument("torque bounds: error boxes must contain zero");
  }
};

/// Interval enclosure of u_traj and u_corr when (e_p, e_v) range over the
/// boxes, with Mbar and Cbar frozen at the nominal state.
struct TorqueEnclosure {
  IntervalVec u_traj{};
  IntervalVec u_corr{};
  IntervalVec u{};
};

inline TorqueEnclosure enclose_torques(const Mat3& Mbar, const Mat3& Cbar, const RefSample& ref, const Gains& g,
                                       const ErrorBoxes& boxes) {
  IntervalVec w{}, pd{};
  for (int j = 0; j < 3; ++j) {
    w[j] = (-g.kp[j]) * boxes.ep[j] + (-g.kv[j]) * boxes.ev[j];
    pd[j] = Interval(ref.pd[j]) + boxes.ev[j];
  }
  TorqueEnclosure e;
  for (int i = 0; i < 3; ++i) {
    Interval traj(0.0), corr(0.0);
    for (int j = 0; j < 3; ++j) {
      traj += Mbar(i, j) * Interval(ref.pdd[j]) + Cbar(i, j) * pd[j];
      corr += Mbar(i, j) * w[j];
    }
    e.u_traj[i] = traj;
    e.u_corr[i] = corr;
    e.u[i] = traj + corr;
  }
  return e;
}

/// States on the reference: (x, y, alpha) = p_d(t) and the joint angles
/// integrated from phidot = M_IIK(q) pd_d(t). This is the trajectory an
/// open-loop run under u_traj follows when it starts on the reference, and
/// it stays defined across jumps of pd_d.
inline std::vector<RobotState> nominal_states(const RobotParams& params, const ReferenceTrajectory& ref,
                                              const std::vector<double>& times, const Vec3& joints0 = Vec3::Zero(),
                                              const OdeOptions& opts = {}) {
  std::vector<double> events = times;
  for (double b : ref.breaks())
    if (b > times.front() && b < times.back()) events.push_back(b);
  detail::merge_times(events);

  DormandPrince45<3> ode(opts);
  Eigen::Vector3d phi = joints0;
  double t = events.front();
  auto state_at = [&](const Vec3& ph, const RefSample& r) {
    Vec6 q;
    q << r.p, ph;
    return RobotState(q, admissible_velocity(params, q, r.pd));
  };
  std::vector<RobotState> out;
  out.reserve(times.size());
  std::size_t next = 0;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const double te = events[e];
    if (e > 0) {
      const double lo = t, hi = te;
      // Stay strictly inside (lo, hi) so a jump at hi is seen from the left.
      auto rhs = [&](double tt, const Eigen::Vector3d& ph) {
        const double ts = std::clamp(tt, lo, hi - 1e-9 * std::max(1.0, std::abs(hi)));
        const RefSample r = ref.at(ts);
        Vec6 q;
        q << r.p, ph;
        return Eigen::Vector3d(iik_matrix(params, q) * r.pd);
      };
      ode.advance(rhs, t, phi, te);
      t = te;
    }
    if (next < times.size() && std::abs(times[next] - te) <= 1e-10) {
      out.push_back(state_at(phi, ref.at(te)));
      ++next;
    }
  }
  return out;
}

struct FeasibilityPoint {
  double t = 0.0;
  RobotState nominal;
  RefSample ref;
  Mat3 Mbar = Mat3::Zero();
  Mat3 Cbar = Mat3::Zero();
  TorqueEnclosure torques;
  bool ok = true;
};

struct FeasibilityReport {
  std::vector<FeasibilityPoint> points;
  bool ok = true;
  double first_violation = std::numeric_limits<double>::quiet_NaN();
  Vec3 peak_abs = Vec3::Zero();  // largest |u| endpoint per motor
};

/// Interval check that the computed-torque commands stay within the motor
/// limits along the reference when the tracking errors stay in the boxes.
/// Mbar and Cbar are evaluated on the nominal trajectory only, so the result
/// is an approximation for the real, slightly different motion.
inline FeasibilityReport torque_feasibility(const RobotParams& params, const ReferenceTrajectory& ref,
                                            const Gains& gains, const TorqueBounds& bounds, double grid_dt,
                                            const Vec3& joints0 = Vec3::Zero()) {
  if (!(grid_dt > 0.0)) throw std::invalid_argument("feasibility: grid step must be > 0");
  bounds.validate();
  const auto grid = detail::uniform_grid(ref.t_begin(), grid_dt, ref.t_end());
  const auto states = nominal_states(params, ref, grid, joints0);
  FeasibilityReport rep;
  rep.points.reserve(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    FeasibilityPoint pt;
    pt.t = grid[k];
    pt.nominal = states[k];
    pt.ref = ref.at(pt.t);
    const auto ts = task_space_model(params, pt.nominal.q, pt.nominal.qdot);
    pt.Mbar = ts.Mbar;
    pt.Cbar = ts.Cbar;
    pt.torques = enclose_torques(pt.Mbar, pt.Cbar, pt.ref, gains, bounds.boxes);
    for (int i = 0; i < 3; ++i) {
      pt.ok = pt.ok && bounds.limits[i].contains(pt.torques.u[i]);
      rep.peak_abs[i] = std::max(rep.peak_abs[i], pt.torques.u[i].mag());
    }
    if (!pt.ok && rep.ok) {
      rep.ok = false;
      rep.first_violation = pt.t;
    }
    rep.points.push_back(std::move(pt));
  }
  return rep;
}

struct EnclosureCheck {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;  // largest distance outside an interval
};

/// Draws error samples uniformly in the boxes (the first 64 are the box
/// vertices) and evaluates u = Mbar (pdd - Kp e_p - Kv e_v) + Cbar (pd + e_v)
/// in plain floating point at every report point. A sample counts as a
/// violation when it leaves its interval by more than a few ulps of the
/// floating-point evaluation itself.
inline EnclosureCheck monte_carlo_enclosure(const FeasibilityReport& rep, const Gains& g, const ErrorBoxes& boxes,
                                            std::size_t samples_per_point, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  EnclosureCheck chk;
  for (const auto& pt : rep.points) {
    for (std::size_t s = 0; s < samples_per_point; ++s) {
      Vec3 ep, ev;
      for (int j = 0; j < 3; ++j) {
        if (s < 64) {
          ep[j] = (s >> j) & 1u ? boxes.ep[j].hi : boxes.ep[j].lo;
          ev[j] = (s >> (j + 3)) & 1u ? boxes.ev[j].hi : boxes.ev[j].lo;
        } else {
          ep[j] = boxes.ep[j].lo + unit(rng) * boxes.ep[j].width();
          ev[j] = boxes.ev[j].lo + unit(rng) * boxes.ev[j].width();
        }
      }
      const Vec3 u = pt.Mbar * (pt.ref.pdd - g.kp.cwiseProduct(ep) - g.kv.cwiseProduct(ev)) +
                     pt.Cbar * (pt.ref.pd + ev);
      ++chk.samples;
      bool bad = false;
      for (int i = 0; i < 3; ++i) {
        const auto& I = pt.torques.u[i];
        const double slack = 1e-13 * std::max(1.0, I.mag());
        const double excess = std::max(I.lo - u[i], u[i] - I.hi);
        if (excess > slack) {
          bad = true;
          chk.worst_excess = std::max(chk.worst_excess, excess);
        }
      }
      if (bad) ++chk.violations;
    }
  }
  return chk;
}

}  // namespace otbot
