#pragma once

// Grey-box identification by prediction-error minimisation: simulated sensor
// outputs under candidate parameters are compared with recorded ones and the
// squared mismatch is minimised with the bounded trust-region solver.
// The three-step pipeline identifies the basic shaft parameters, then the
// chassis, then the working platform.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "otbot/diagnostics.hpp"
#include "otbot/least_squares.hpp"
#include "otbot/params.hpp"
#include "otbot/simulator.hpp"

namespace otbot {

enum class ExperimentModel { shaft, robot };

/// One recorded experiment and everything needed to predict it.
struct Experiment {
  std::string name;
  ExperimentModel model = ExperimentModel::robot;
  RobotState x0;
  ControlSequence controls;
  SensorRecord record;
  /// Noise-free sensor model used for prediction. For shaft experiments the
  /// encoder axis selects the wheel or pivot shaft.
  SensorModel sensor;
  /// Indices of the sensor outputs entering the loss; empty means all.
  std::vector<int> outputs;

  double duration() const { return record.times.empty() ? 0.0 : record.times.back() - record.times.front(); }
};

struct PredictionError {
  double epsilon = 0.0;
  Eigen::VectorXd residuals;
};

struct ParamEstimate {
  std::vector<Param> names;
  Eigen::VectorXd values;
  double loss = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;

  double value(Param p) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == p) return values[static_cast<Eigen::Index>(i)];
    throw std::out_of_range("parameter not part of the estimate");
  }
  /// Copies the estimated values into a parameter set.
  RobotParams apply(RobotParams base) const {
    for (std::size_t i = 0; i < names.size(); ++i) base.at(names[i]) = values[static_cast<Eigen::Index>(i)];
    return base;
  }
};

struct IdentOptions {
  LsqOptions lsq;
  /// Integrator used while fitting.
  OdeOptions fit_ode{.rtol = 1e-8, .atol = 1e-12};
  /// Integrator for the final polish pass.
  OdeOptions polish_ode{.rtol = 1e-10, .atol = 1e-12};
  bool polish = true;
};

/// Physically motivated search box for each parameter.
inline std::pair<double, double> param_bounds(Param p) {
  switch (p) {
    case Param::mc:
    case Param::mp: return {1e-3, 1e4};
    case Param::Ic:
    case Param::Ip:
    case Param::Ia: return {1e-6, 1e4};
    case Param::bw:
    case Param::bp: return {0.0, 1e3};
    case Param::xB:
    case Param::yB:
    case Param::xF:
    case Param::yF: return {-1.0, 1.0};
    case Param::l1:
    case Param::l2:
    case Param::r: return {1e-6, 10.0};
  }
  throw std::logic_error("unknown parameter");
}

inline Bounds bounds_for(const std::vector<Param>& names) {
  Bounds b{Eigen::VectorXd(static_cast<Eigen::Index>(names.size())),
           Eigen::VectorXd(static_cast<Eigen::Index>(names.size()))};
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto [lo, hi] = param_bounds(names[i]);
    b.lo[static_cast<Eigen::Index>(i)] = lo;
    b.hi[static_cast<Eigen::Index>(i)] = hi;
  }
  return b;
}

inline RobotParams with_values(RobotParams base, const std::vector<Param>& names, const Eigen::VectorXd& values) {
  for (std::size_t i = 0; i < names.size(); ++i) base.at(names[i]) = values[static_cast<Eigen::Index>(i)];
  return base;
}

/// Shaft parameters seen by a single-shaft experiment: the wheel shaft uses
/// (Ia, bw), the pivot shaft (Ip, bp).
inline ShaftParams shaft_params(const RobotParams& p, int axis) {
  return axis == coord::phi_p ? ShaftParams{p.Ip, p.bp} : ShaftParams{p.Ia, p.bw};
}

/// Noise-free prediction of the experiment's sensor record under params.
inline SensorRecord predict(const Experiment& exp, const RobotParams& params, const OdeOptions& ode = {}) {
  params.validate();
  if (exp.model == ExperimentModel::shaft) {
    SensorRecord rec;
    rec.kind = SensorKind::encoder;
    rec.times = exp.record.times;
    for (double w : simulate_shaft(shaft_params(params, exp.sensor.encoder_axis), exp.controls,
                                   exp.sensor.encoder_axis, rec.times, ode)) {
      Eigen::VectorXd y(1);
      y[0] = w;
      rec.outputs.push_back(std::move(y));
    }
    return rec;
  }
  const double t_end = exp.record.times.back();
  const auto traj = integrate(params, exp.x0, exp.controls, t_end, ode, {}, exp.record.times);
  SensorRecord rec = sample_sensors(traj, exp.sensor.noise_free(), params);
  if (rec.size() != exp.record.size()) throw std::runtime_error("prediction grid does not match the record");
  return rec;
}

/// Residuals y_meas - y_pred over the selected outputs, sample-major.
inline Eigen::VectorXd output_residuals(const Experiment& exp, const SensorRecord& pred) {
  const auto n = exp.record.size();
  std::vector<int> sel = exp.outputs;
  if (sel.empty())
    for (int j = 0; j < static_cast<int>(exp.record.dim()); ++j) sel.push_back(j);
  Eigen::VectorXd r(static_cast<Eigen::Index>(n * sel.size()));
  Eigen::Index i = 0;
  for (std::size_t k = 0; k < n; ++k)
    for (int j : sel) r[i++] = exp.record.outputs[k][j] - pred.outputs[k][j];
  return r;
}

/// Loss eps = sum of squared residuals for the candidate values of `names`,
/// the other parameters taken from `fixed`. A candidate that cannot be
/// simulated yields eps = +inf and NaN residuals.
inline PredictionError prediction_error(const std::vector<Param>& names, const Eigen::VectorXd& candidate,
                                        const RobotParams& fixed, const Experiment& exp,
                                        const OdeOptions& ode = {}) {
  PredictionError out;
  try {
    const auto pred = predict(exp, with_values(fixed, names, candidate), ode);
    out.residuals = output_residuals(exp, pred);
    out.epsilon = out.residuals.squaredNorm();
    if (!std::isfinite(out.epsilon)) throw IntegrationError("non-finite prediction");
  } catch (const std::exception& e) {
    diagnostics::warn(std::string("prediction_error: ") + e.what());
    const std::size_t dim = exp.outputs.empty() ? exp.record.dim() : exp.outputs.size();
    out.residuals = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(exp.record.size() * dim),
                                              std::numeric_limits<double>::quiet_NaN());
    out.epsilon = std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Fits `names` on one experiment starting from `guess`. The guess is
/// clamped into the parameter box.
inline ParamEstimate fit_parameters(const Experiment& exp, const std::vector<Param>& names,
                                    const Eigen::VectorXd& guess, const RobotParams& fixed,
                                    const IdentOptions& opts = {}) {
  const Bounds b = bounds_for(names);
  const Eigen::VectorXd x0 = guess.cwiseMax(b.lo).cwiseMin(b.hi);
  auto fit_with = [&](const Eigen::VectorXd& start, const OdeOptions& ode, LsqOptions lsq) {
    ResidualFn fn = [&, ode](const Eigen::VectorXd& x) { return prediction_error(names, x, fixed, exp, ode).residuals; };
    return fit_trust_region(fn, start, b, lsq);
  };
  LsqResult res = fit_with(x0, opts.fit_ode, opts.lsq);
  int iterations = res.iterations, evaluations = res.evaluations;
  if (opts.polish) {
    const LsqResult pol = fit_with(res.x, opts.polish_ode, opts.lsq);
    iterations += pol.iterations;
    evaluations += pol.evaluations;
    const bool converged = res.converged && pol.converged;
    res = pol;
    res.converged = converged || pol.converged;
  }
  ParamEstimate est;
  est.names = names;
  est.values = res.x;
  est.loss = res.loss;
  est.iterations = iterations;
  est.evaluations = evaluations;
  est.converged = res.converged;
  est.reason = res.reason;
  return est;
}

// ---------------------------------------------------------------------------
// Experiments of the three-step procedure.

struct ExperimentSetup {
  double sample_rate = 100.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Single-shaft run from rest under a constant torque, read by an encoder.
inline Experiment make_shaft_experiment(const RobotParams& truth, int axis, double torque, double duration,
                                        const ExperimentSetup& setup, const OdeOptions& ode = {}) {
  Experiment e;
  e.name = axis == coord::phi_p ? "platform-spin" : "wheel-spin";
  e.model = ExperimentModel::shaft;
  e.sensor = SensorModel{SensorKind::encoder, setup.sample_rate, setup.sigma, setup.seed, axis};
  ControlInput u;
  if (axis == coord::phi_r) u.tau_r = torque;
  if (axis == coord::phi_l) u.tau_l = torque;
  if (axis == coord::phi_p) u.tau_p = torque;
  e.controls = ControlSequence::constant(u, duration, 1.0 / setup.sample_rate);
  e.record = sample_shaft_encoder(shaft_params(truth, axis), torque, duration, e.sensor, ode);
  e.sensor = e.sensor.noise_free();
  return e;
}

/// Full-robot run from x0 under constant motor torques, read by the IMU.
inline Experiment make_imu_experiment(const RobotParams& truth, const ControlInput& u, double duration,
                                      const ExperimentSetup& setup, const RobotState& x0 = {},
                                      const OdeOptions& ode = {}) {
  Experiment e;
  e.name = "chassis-excitation";
  e.model = ExperimentModel::robot;
  e.x0 = x0;
  e.controls = ControlSequence::constant(u, duration, 1.0 / setup.sample_rate);
  const SensorModel sensor{SensorKind::imu, setup.sample_rate, setup.sigma, setup.seed};
  const auto traj =
      integrate(truth, x0, e.controls, duration, ode, {}, sensor.sample_times(0.0, duration));
  e.record = sample_sensors(traj, sensor, truth);
  e.sensor = sensor.noise_free();
  return e;
}

// ---------------------------------------------------------------------------
// The three steps.

struct BasicParams {
  double Ia = 0.0;
  double bw = 0.0;
  double Ip0 = 0.0;
  double bp = 0.0;
};

struct BasicEstimate {
  BasicParams values;
  ParamEstimate wheel;
  ParamEstimate platform;
  bool converged() const { return wheel.converged && platform.converged; }
};

/// Two independent two-parameter fits on single-shaft experiments. Both
/// wheels are taken as identical.
inline BasicEstimate identify_basic(const Experiment& wheel_exp, const Experiment& platform_exp,
                                    const BasicParams& guess, const IdentOptions& opts = {}) {
  BasicEstimate out;
  const RobotParams base = RobotParams::nominal();
  out.wheel = fit_parameters(wheel_exp, {Param::Ia, Param::bw}, Eigen::Vector2d(guess.Ia, guess.bw), base, opts);
  out.platform =
      fit_parameters(platform_exp, {Param::Ip, Param::bp}, Eigen::Vector2d(guess.Ip0, guess.bp), base, opts);
  out.values = {out.wheel.values[0], out.wheel.values[1], out.platform.values[0], out.platform.values[1]};
  return out;
}

struct MassParams {
  double m = 0.0;
  double I = 0.0;
  double x = 0.0;
  double y = 0.0;
};

inline const std::vector<Param>& chassis_param_names() {
  static const std::vector<Param> names{Param::mc, Param::Ic, Param::xB, Param::yB};
  return names;
}
inline const std::vector<Param>& platform_param_names() {
  static const std::vector<Param> names{Param::mp, Param::Ip, Param::xF, Param::yF};
  return names;
}

inline Eigen::Vector4d as_vector(const MassParams& m) { return {m.m, m.I, m.x, m.y}; }
inline MassParams as_mass_params(const Eigen::VectorXd& v) { return {v[0], v[1], v[2], v[3]}; }

/// Chassis fit (mc, Ic, xB, yB) on IMU data with the platform unloaded;
/// `known` supplies geometry, step-1 estimates and the unloaded platform.
inline ParamEstimate identify_chassis(const Experiment& exp, const RobotParams& known, const MassParams& guess,
                                      const IdentOptions& opts = {}) {
  return fit_parameters(exp, chassis_param_names(), as_vector(guess), known, opts);
}

/// Working-platform fit (mp, Ip, xF, yF) with the chassis known.
inline ParamEstimate identify_platform(const Experiment& exp, const RobotParams& known, const MassParams& guess,
                                       const IdentOptions& opts = {}) {
  return fit_parameters(exp, platform_param_names(), as_vector(guess), known, opts);
}

/// Initial guess for a platform deviating by fraction `delta` from the
/// unloaded one: a load of delta * max_load at offset delta * max_offset in
/// both axes, with the inertia moved by Steiner's theorem.
inline MassParams steiner_guess(const MassParams& unloaded, double delta, double max_load = 500.0,
                                double max_offset = 0.45) {
  MassParams g;
  g.m = unloaded.m + delta * max_load;
  g.x = delta * max_offset;
  g.y = delta * max_offset;
  g.I = unloaded.I + g.m * (g.x * g.x + g.y * g.y);
  return g;
}

// ---------------------------------------------------------------------------
// Pipeline.

struct PipelineConfig {
  RobotParams truth = RobotParams::nominal();
  /// Working platform for step 3 (defaults to the unloaded one).
  MassParams working_platform{21.95, 2.22, 0.0, 0.0};
  BasicParams basic_guess{0.01, 0.09, 1.11, 0.12};
  MassParams chassis_guess{54.57, 0.65, -0.07, 0.25};
  MassParams platform_guess{146.95, 5.94, 0.11, 0.11};
  double shaft_torque = 6.0;
  double wheel_duration = 0.5;
  double platform_duration = 1.5;
  double encoder_sigma = 0.01;
  ControlInput excitation{6.0, -10.0, 6.0};
  double chassis_duration = 3.0;
  double platform_window = 1.0;
  double imu_sigma = 13.73e-3;
  double sample_rate = 100.0;
  std::uint64_t seed = 0;
  /// Each step builds on the estimates of the earlier ones. When false the
  /// earlier-step parameters are set to their true values, which isolates
  /// the accuracy of a single step from the errors it inherits.
  bool chain_estimates = true;
  IdentOptions ident;
  /// Integrator for the synthetic "measured" data.
  OdeOptions truth_ode{};
};

struct StepReport {
  std::string name;
  std::vector<Param> names;
  Eigen::VectorXd truth;
  ParamEstimate estimate;
  /// Parameters held fixed and where their values came from.
  std::vector<std::pair<Param, std::string>> fixed;
  Experiment experiment;
  /// Full parameter set the estimate predicts the experiment with.
  RobotParams fitted;

  Eigen::VectorXd abs_errors() const { return (estimate.values - truth).cwiseAbs(); }
};

struct IdentPipelineResult {
  BasicEstimate step1;
  ParamEstimate step2;
  ParamEstimate step3;
  std::vector<StepReport> reports;
  /// Parameters known after all three steps.
  RobotParams identified;
};

inline Eigen::VectorXd truth_values(const RobotParams& p, const std::vector<Param>& names) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) v[static_cast<Eigen::Index>(i)] = p.at(names[i]);
  return v;
}

inline RobotParams with_platform(RobotParams p, const MassParams& m) {
  p.mp = m.m;
  p.Ip = m.I;
  p.xF = m.x;
  p.yF = m.y;
  return p;
}

/// Runs steps 1..last_step. Each step only uses constants and estimates of
/// earlier steps; synthetic data come from `truth`.
inline IdentPipelineResult run_pipeline(const PipelineConfig& cfg, int last_step = 3) {
  IdentPipelineResult out;
  const RobotParams& truth = cfg.truth;
  const std::vector<Param> geometry{Param::l1, Param::l2, Param::r};

  // Step 1: shafts.
  const ExperimentSetup enc{cfg.sample_rate, cfg.encoder_sigma, 0};
  auto wheel_setup = enc, plat_setup = enc;
  wheel_setup.seed = derive_seed(cfg.seed, 1);
  plat_setup.seed = derive_seed(cfg.seed, 2);
  const auto wheel_exp =
      make_shaft_experiment(truth, coord::phi_r, cfg.shaft_torque, cfg.wheel_duration, wheel_setup, cfg.truth_ode);
  const auto plat_exp = make_shaft_experiment(truth, coord::phi_p, cfg.shaft_torque, cfg.platform_duration,
                                              plat_setup, cfg.truth_ode);
  out.step1 = identify_basic(wheel_exp, plat_exp, cfg.basic_guess, cfg.ident);
  out.reports.push_back({"step1-wheel", out.step1.wheel.names, truth_values(truth, out.step1.wheel.names),
                         out.step1.wheel, {}, wheel_exp,
                         out.step1.wheel.apply(RobotParams::nominal())});
  out.reports.push_back({"step1-platform", out.step1.platform.names,
                         truth_values(truth, out.step1.platform.names), out.step1.platform, {}, plat_exp,
                         out.step1.platform.apply(RobotParams::nominal())});

  // Geometry and the unloaded platform's mp0, xF0, yF0 are measured
  // constants; everything else comes from earlier steps or the guesses.
  RobotParams known = with_platform(truth, {truth.mp, out.step1.values.Ip0, 0.0, 0.0});
  known.Ia = out.step1.values.Ia;
  known.bw = out.step1.values.bw;
  known.bp = out.step1.values.bp;
  if (!cfg.chain_estimates) {
    known.Ip = truth.Ip;
    known.Ia = truth.Ia;
    known.bw = truth.bw;
    known.bp = truth.bp;
  }
  known.mc = cfg.chassis_guess.m;
  known.Ic = cfg.chassis_guess.I;
  known.xB = cfg.chassis_guess.x;
  known.yB = cfg.chassis_guess.y;
  out.identified = known;
  if (last_step < 2) return out;

  // Step 2: chassis with the platform unloaded.
  const RobotParams truth_unloaded = with_platform(truth, {truth.mp, truth.Ip, 0.0, 0.0});
  const ExperimentSetup imu{cfg.sample_rate, cfg.imu_sigma, derive_seed(cfg.seed, 3)};
  const auto chassis_exp = make_imu_experiment(truth_unloaded, cfg.excitation, cfg.chassis_duration, imu, {},
                                               cfg.truth_ode);
  out.step2 = identify_chassis(chassis_exp, known, cfg.chassis_guess, cfg.ident);
  std::vector<std::pair<Param, std::string>> fixed2;
  for (Param p : geometry) fixed2.emplace_back(p, "constant");
  for (Param p : {Param::mp, Param::xF, Param::yF}) fixed2.emplace_back(p, "constant");
  for (Param p : {Param::Ia, Param::bw, Param::Ip, Param::bp}) fixed2.emplace_back(p, cfg.chain_estimates ? "step 1" : "true value");
  out.reports.push_back({"step2-chassis", chassis_param_names(), truth_values(truth_unloaded, chassis_param_names()),
                         out.step2, fixed2, chassis_exp, out.step2.apply(known)});
  known = out.step2.apply(known);
  out.identified = known;
  if (last_step < 3) return out;
  if (!cfg.chain_estimates)
    for (Param p : chassis_param_names()) known.at(p) = truth.at(p);

  // Step 3: working platform over a short window. The noise stream is the
  // one of step 2, so with an unloaded working platform the record is the
  // first part of the step-2 record.
  const RobotParams truth_working = with_platform(truth, cfg.working_platform);
  const ExperimentSetup imu3{cfg.sample_rate, cfg.imu_sigma, derive_seed(cfg.seed, 3)};
  const auto plat3_exp = make_imu_experiment(truth_working, cfg.excitation, cfg.platform_window, imu3, {},
                                             cfg.truth_ode);
  out.step3 = identify_platform(plat3_exp, known, cfg.platform_guess, cfg.ident);
  std::vector<std::pair<Param, std::string>> fixed3;
  for (Param p : geometry) fixed3.emplace_back(p, "constant");
  for (Param p : {Param::Ia, Param::bw, Param::bp}) fixed3.emplace_back(p, cfg.chain_estimates ? "step 1" : "true value");
  for (Param p : chassis_param_names()) fixed3.emplace_back(p, cfg.chain_estimates ? "step 2" : "true value");
  out.reports.push_back({"step3-platform", platform_param_names(),
                         truth_values(truth_working, platform_param_names()), out.step3, fixed3, plat3_exp, out.step3.apply(known)});
  out.identified = out.step3.apply(known);
  return out;
}

// ---------------------------------------------------------------------------
// Sensitivity of the platform fit to the initial guess.

struct SweepCell {
  double deviation = 0.0;
  std::uint64_t seed = 0;
  Eigen::Vector4d estimate = Eigen::Vector4d::Zero();
  Eigen::Vector4d abs_errors = Eigen::Vector4d::Zero();  // |dmp|, |dIp|, |dxF|, |dyF|
  /// Distance to the optimum reached on the same data from the true values.
  Eigen::Vector4d basin_gap = Eigen::Vector4d::Zero();
  bool solver_converged = false;
  /// The fit landed on the same optimum as the fit started at the truth,
  /// i.e. the initial-guess deviation did not change the answer.
  bool converged = false;
  bool within_tolerance = false;
  double loss = 0.0;
};

struct SweepConfig {
  RobotParams known = RobotParams::nominal();  // chassis and shafts
  MassParams truth_platform{21.95, 2.22, 0.0, 0.0};
  ControlInput excitation{6.0, -10.0, 6.0};
  double window = 1.0;
  double imu_sigma = 13.73e-3;
  double sample_rate = 100.0;
  Eigen::Vector4d tolerance{0.2, 1e-2, 1e-3, 1e-3};
  /// Two optima count as the same when they differ by less than this
  /// fraction of the tolerance in every component.
  double basin_fraction = 0.1;
  IdentOptions ident;
  OdeOptions truth_ode{};
};

namespace detail {

struct SweepData {
  Experiment exp;
  ParamEstimate reference;
};

inline SweepData sweep_data(const SweepConfig& cfg, std::uint64_t seed) {
  const RobotParams truth = with_platform(cfg.known, cfg.truth_platform);
  const ExperimentSetup imu{cfg.sample_rate, cfg.imu_sigma, derive_seed(seed, 3)};
  auto exp = make_imu_experiment(truth, cfg.excitation, cfg.window, imu, {}, cfg.truth_ode);
  auto ref = identify_platform(exp, cfg.known, cfg.truth_platform, cfg.ident);
  return {std::move(exp), std::move(ref)};
}

inline SweepCell sweep_cell(const SweepConfig& cfg, const SweepData& data, double deviation, std::uint64_t seed) {
  const auto est = identify_platform(data.exp, cfg.known, steiner_guess(cfg.truth_platform, deviation), cfg.ident);
  SweepCell c;
  c.deviation = deviation;
  c.seed = seed;
  c.estimate = est.values;
  c.abs_errors = (est.values - as_vector(cfg.truth_platform)).cwiseAbs();
  c.basin_gap = (est.values - data.reference.values).cwiseAbs();
  c.solver_converged = est.converged;
  c.converged = est.converged && (c.basin_gap.array() <= cfg.basin_fraction * cfg.tolerance.array()).all();
  c.within_tolerance = est.converged && (c.abs_errors.array() <= cfg.tolerance.array()).all();
  c.loss = est.loss;
  return c;
}

}  // namespace detail

/// One cell of the initial-guess sensitivity sweep for the platform step.
inline SweepCell sweep_cell(const SweepConfig& cfg, double deviation, std::uint64_t seed) {
  return detail::sweep_cell(cfg, detail::sweep_data(cfg, seed), deviation, seed);
}

/// All (deviation, seed) cells. Every deviation of one seed reuses that
/// seed's recording, as when one experiment is refitted from many guesses.
/// Seeds are spread over up to `jobs` threads; the result does not depend on
/// the thread count.
inline std::vector<SweepCell> sensitivity_sweep(const SweepConfig& cfg, const std::vector<double>& deviations,
                                                const std::vector<std::uint64_t>& seeds, unsigned jobs = 1) {
  std::vector<std::vector<SweepCell>> per_seed(seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        const auto data = detail::sweep_data(cfg, seeds[i]);
        for (double d : deviations) per_seed[i].push_back(detail::sweep_cell(cfg, data, d, seeds[i]));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(seeds.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  std::vector<SweepCell> cells;
  for (auto& v : per_seed) cells.insert(cells.end(), v.begin(), v.end());
  std::stable_sort(cells.begin(), cells.end(),
                   [](const SweepCell& a, const SweepCell& b) { return a.deviation < b.deviation; });
  return cells;
}

}  // namespace otbot
