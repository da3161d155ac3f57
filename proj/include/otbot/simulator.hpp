#pragma once

// Time-domain simulation under zero-order-hold controls, plus the simulated
// encoder / IMU readings used for identification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "otbot/dynamics.hpp"
#include "otbot/ode.hpp"
#include "otbot/params.hpp"
#include "otbot/types.hpp"

namespace otbot {

/// Piecewise-constant control: u(t) = samples[k] for t0 + k dt <= t < t0 + (k+1) dt.
/// Beyond the last sample the last value is held.
struct ControlSequence {
  double t0 = 0.0;
  double dt = 0.01;
  std::vector<ControlInput> samples;

  static ControlSequence constant(const ControlInput& u, double duration, double dt) {
    ControlSequence c;
    c.dt = dt;
    c.samples.assign(static_cast<std::size_t>(std::llround(duration / dt)) + 1, u);
    return c;
  }

  std::size_t index_at(double t) const {
    if (samples.empty()) throw std::logic_error("empty control sequence");
    const double k = std::floor((t - t0) / dt + 1e-9);
    if (k <= 0) return 0;
    return std::min(static_cast<std::size_t>(k), samples.size() - 1);
  }
  const ControlInput& at(double t) const { return samples[index_at(t)]; }

  void validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("control sequence: dt must be > 0");
    if (samples.empty()) throw std::invalid_argument("control sequence: no samples");
  }
};

/// A planar force on the pivot point, active on [t_on, t_off).
struct DisturbancePulse {
  double t_on = 0.0;
  double t_off = 0.0;
  Vec2 force = Vec2::Zero();
};

struct DisturbanceSchedule {
  std::vector<DisturbancePulse> pulses;

  Vec2 force_at(double t) const {
    Vec2 f = Vec2::Zero();
    for (const auto& p : pulses)
      if (t >= p.t_on && t < p.t_off) f += p.force;
    return f;
  }
  bool empty() const { return pulses.empty(); }
};

struct SimTrajectory {
  std::vector<double> times;
  std::vector<RobotState> states;
  std::vector<ControlInput> inputs;
  OdeStats stats;

  std::size_t size() const { return times.size(); }

  /// Index of the sample at time t (within 1e-9 s); throws when absent.
  std::size_t index_of(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t - 1e-9);
    if (it == times.end() || std::abs(*it - t) > 1e-9)
      throw std::out_of_range("trajectory has no sample at t = " + std::to_string(t));
    return static_cast<std::size_t>(it - times.begin());
  }
};

namespace detail {

inline void merge_times(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double t : v)
    if (out.empty() || t - out.back() > 1e-10) out.push_back(t);
  v.swap(out);
}

inline std::vector<double> uniform_grid(double t0, double dt, double t_end) {
  std::vector<double> g;
  const auto n = static_cast<long>(std::floor((t_end - t0) / dt + 1e-9));
  for (long k = 0; k <= n; ++k) g.push_back(t0 + static_cast<double>(k) * dt);
  return g;
}

}  // namespace detail

/// Closed- or open-loop simulation on a zero-order-hold grid of period dt.
/// At every tick t_k the policy is queried with (t_k, state) and its output is
/// held until the next tick. Steps are clipped to ticks, requested sample
/// times and disturbance edges. Every tick and requested sample time is
/// recorded.
template <class Policy>
SimTrajectory simulate_zoh(const RobotParams& params, const RobotState& x0, double t0, double dt, double t_end,
                           Policy&& policy, const DisturbanceSchedule& dist = {}, const OdeOptions& opts = {},
                           const std::vector<double>& sample_times = {}) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
  if (!(t_end > t0)) throw std::invalid_argument("simulate: t_end must exceed t0");
  if (!x0.finite()) throw std::invalid_argument("simulate: non-finite initial state");

  std::vector<double> ticks = detail::uniform_grid(t0, dt, t_end);
  std::vector<double> record = ticks;
  for (double t : sample_times)
    if (t >= t0 - 1e-12 && t <= t_end + 1e-12) record.push_back(t);
  record.push_back(t_end);
  detail::merge_times(record);

  std::vector<double> events = record;
  for (const auto& p : dist.pulses) {
    if (p.t_on > t0 && p.t_on < t_end) events.push_back(p.t_on);
    if (p.t_off > t0 && p.t_off < t_end) events.push_back(p.t_off);
  }
  detail::merge_times(events);

  DormandPrince45<12> ode(opts);
  SimTrajectory traj;
  traj.times.reserve(record.size());
  traj.states.reserve(record.size());
  traj.inputs.reserve(record.size());

  Vec12 y = x0.to_vector();
  double t = t0;
  std::size_t next_tick = 0, next_record = 0;
  ControlInput u;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const double te = events[e];
    if (e > 0) {
      const Vec2 fp = dist.force_at(0.5 * (t + te));
      auto rhs = [&](double, const Vec12& x) {
        return state_derivative(params, RobotState::from_vector(x), u, fp);
      };
      ode.advance(rhs, t, y, te);
      t = te;
      if (!y.allFinite()) throw IntegrationError("simulate: non-finite state at t = " + std::to_string(t));
    }
    const RobotState s = RobotState::from_vector(y);
    if (next_tick < ticks.size() && std::abs(ticks[next_tick] - te) <= 1e-10) {
      u = policy(te, s);
      ++next_tick;
    }
    if (next_record < record.size() && std::abs(record[next_record] - te) <= 1e-10) {
      traj.times.push_back(te);
      traj.states.push_back(s);
      traj.inputs.push_back(u);
      ++next_record;
    }
  }
  traj.stats = ode.stats();
  return traj;
}

/// Open-loop integration of a control sequence from x0 up to t_end.
inline SimTrajectory integrate(const RobotParams& params, const RobotState& x0, const ControlSequence& controls,
                               double t_end, const OdeOptions& opts = {}, const DisturbanceSchedule& dist = {},
                               const std::vector<double>& sample_times = {}) {
  controls.validate();
  std::size_t k = 0;
  auto policy = [&](double, const RobotState&) {
    const auto& u = controls.samples[std::min(k, controls.samples.size() - 1)];
    ++k;
    return u;
  };
  return simulate_zoh(params, x0, controls.t0, controls.dt, t_end, policy, dist, opts, sample_times);
}

// ---------------------------------------------------------------------------
// Single-shaft model  I phidd = u - b phid  used for the basic experiments.

struct ShaftParams {
  double inertia = 1.0;
  double friction = 0.0;
};

/// Closed-form speed from rest under constant torque.
inline double shaft_speed_closed_form(const ShaftParams& s, double torque, double t) {
  if (s.friction == 0.0) return torque * t / s.inertia;
  return torque / s.friction * (1.0 - std::exp(-s.friction * t / s.inertia));
}

/// Torque on the shaft driven by motor `axis` (coord::phi_r, phi_l or phi_p).
inline double shaft_torque(const ControlInput& u, int axis) {
  switch (axis) {
    case coord::phi_r: return u.tau_r;
    case coord::phi_l: return u.tau_l;
    case coord::phi_p: return u.tau_p;
  }
  throw std::invalid_argument("shaft axis must be a motor coordinate");
}

/// Shaft speed at each sample time (from rest at t = controls.t0) under the
/// zero-order-hold torque of motor `axis`.
inline std::vector<double> simulate_shaft(const ShaftParams& s, const ControlSequence& controls, int axis,
                                          const std::vector<double>& times, const OdeOptions& opts = {}) {
  if (!(s.inertia > 0.0)) throw std::invalid_argument("shaft inertia must be > 0");
  controls.validate();
  if (times.empty()) return {};
  using Y = Eigen::Vector2d;
  std::vector<double> events = times;
  for (double t : detail::uniform_grid(controls.t0, controls.dt, times.back())) events.push_back(t);
  detail::merge_times(events);

  DormandPrince45<2> ode(opts);
  Y y = Y::Zero();
  double t = controls.t0;
  std::vector<double> out;
  out.reserve(times.size());
  std::size_t next = 0;
  for (double te : events) {
    if (te > t) {
      const double tau = shaft_torque(controls.at(0.5 * (t + te)), axis);
      auto rhs = [&](double, const Y& v) { return Y(v[1], (tau - s.friction * v[1]) / s.inertia); };
      ode.advance(rhs, t, y, te);
      t = te;
    }
    if (next < times.size() && std::abs(times[next] - te) <= 1e-10) {
      out.push_back(y[1]);
      ++next;
    }
  }
  if (!std::all_of(out.begin(), out.end(), [](double v) { return std::isfinite(v); }))
    throw IntegrationError("shaft simulation produced a non-finite speed");
  return out;
}

/// Constant-torque shorthand.
inline std::vector<double> simulate_shaft(const ShaftParams& s, double torque, const std::vector<double>& times,
                                          const OdeOptions& opts = {}) {
  ControlSequence c;
  c.dt = times.empty() ? 1.0 : std::max(times.back(), 1e-3);
  c.samples = {ControlInput(0, 0, torque)};
  return simulate_shaft(s, c, coord::phi_p, times, opts);
}

/// Independent 64-bit seed for stream `stream` of a base seed (SplitMix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Sensors.

/// Gaussian white noise from a seeded 64-bit Mersenne Twister through the
/// Box-Muller transform. Bit-reproducible across platforms.
class GaussianNoise {
 public:
  explicit GaussianNoise(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925;
    spare_ = rad * std::sin(two_pi * u2);
    has_spare_ = true;
    return rad * std::cos(two_pi * u2);
  }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Standard deviation of IMU white noise from its noise density and rate.
inline double sigma_imu(double noise_density, double sample_rate) {
  if (noise_density < 0.0 || !(sample_rate > 0.0)) throw std::invalid_argument("sigma_imu: bad arguments");
  return noise_density * std::sqrt(sample_rate);
}

enum class SensorKind { encoder, imu };

struct SensorModel {
  SensorKind kind = SensorKind::encoder;
  double sample_rate = 100.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  /// Motor whose speed an encoder reads (coord::phi_r, phi_l or phi_p).
  int encoder_axis = coord::phi_p;

  SensorModel noise_free() const {
    SensorModel m = *this;
    m.sigma = 0.0;
    return m;
  }

  std::size_t output_dim() const { return kind == SensorKind::imu ? 3 : 1; }

  /// Sample instants t0 + k / rate covering [t0, t0 + duration].
  std::vector<double> sample_times(double t0, double duration) const {
    return detail::uniform_grid(t0, 1.0 / sample_rate, t0 + duration);
  }
};

struct SensorRecord {
  SensorKind kind = SensorKind::encoder;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> outputs;

  std::size_t size() const { return times.size(); }
  std::size_t dim() const { return outputs.empty() ? 0 : static_cast<std::size_t>(outputs.front().size()); }

  /// All outputs stacked sample-major.
  Eigen::VectorXd flattened() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size() * dim()));
    Eigen::Index i = 0;
    for (const auto& o : outputs) {
      v.segment(i, o.size()) = o;
      i += o.size();
    }
    return v;
  }
};

/// Noise-free IMU reading: pivot acceleration expressed in the platform basis
/// (world acceleration rotated by -alpha) and the platform rate.
inline Vec3 imu_reading(const RobotParams& params, const RobotState& s, const ControlInput& u,
                        const Vec2& fp = Vec2::Zero()) {
  const Vec6 qdd = forward_dynamics(params, s.q, s.qdot, u, fp);
  const double ca = std::cos(s.q[coord::alpha]), sa = std::sin(s.q[coord::alpha]);
  return {ca * qdd[coord::x] + sa * qdd[coord::y], -sa * qdd[coord::x] + ca * qdd[coord::y], s.qdot[coord::alpha]};
}

/// Reads the sensor at every sample instant on [first, last trajectory time]
/// and adds Gaussian noise. The trajectory must contain each sample instant.
inline SensorRecord sample_sensors(const SimTrajectory& traj, const SensorModel& model, const RobotParams& params,
                                   const DisturbanceSchedule& dist = {}) {
  if (traj.size() == 0) throw std::invalid_argument("sample_sensors: empty trajectory");
  if (model.sigma < 0.0) throw std::invalid_argument("sample_sensors: sigma must be >= 0");
  SensorRecord rec;
  rec.kind = model.kind;
  rec.sigma = model.sigma;
  rec.seed = model.seed;
  GaussianNoise noise(model.seed);
  for (double t : model.sample_times(traj.times.front(), traj.times.back() - traj.times.front())) {
    const std::size_t i = traj.index_of(t);
    const auto& s = traj.states[i];
    Eigen::VectorXd y;
    if (model.kind == SensorKind::imu) {
      y = imu_reading(params, s, traj.inputs[i], dist.force_at(t));
    } else {
      y.resize(1);
      y[0] = s.qdot[model.encoder_axis];
    }
    if (model.sigma > 0.0)
      for (Eigen::Index j = 0; j < y.size(); ++j) y[j] += model.sigma * noise();
    rec.times.push_back(t);
    rec.outputs.push_back(std::move(y));
  }
  return rec;
}

/// Encoder record of a single-shaft run under constant torque, sampled from
/// t = 0 to duration.
inline SensorRecord sample_shaft_encoder(const ShaftParams& s, double torque, double duration,
                                         const SensorModel& model, const OdeOptions& opts = {}) {
  SensorRecord rec;
  rec.kind = SensorKind::encoder;
  rec.sigma = model.sigma;
  rec.seed = model.seed;
  rec.times = model.sample_times(0.0, duration);
  const auto speeds = simulate_shaft(s, torque, rec.times, opts);
  GaussianNoise noise(model.seed);
  for (double w : speeds) {
    Eigen::VectorXd y(1);
    y[0] = w + (model.sigma > 0.0 ? model.sigma * noise() : 0.0);
    rec.outputs.push_back(std::move(y));
  }
  return rec;
}

}  // namespace otbot
