#pragma once

// Scenario files: INI-style configs describing one experiment. Paths inside a
// scenario file are resolved against the directory of that file.
//
//   [scenario]  name, description, mode = shaft | open-loop | control,
//               params, horizon, seed, friction = on | off
//   [shaft]     axis = wheel | pivot, torque
//   [open-loop] torques = tau_r, tau_l, tau_p ; dt
//   [sensor]    kind = none | encoder | imu, rate, sigma
//   [control]   reference = corridor | figure8 | plan, rate, gains file or
//               [gains] section, disturbance pulses pulseN = t_on, t_off, fx, fy
//   [corridor] / [figure8] / [plan]   reference geometry
//   [feasibility] ep, ev (box radii), limit, grid, samples

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "otbot/config.hpp"
#include "otbot/control.hpp"
#include "otbot/params.hpp"
#include "otbot/simulator.hpp"

namespace otbot {

enum class ScenarioMode { shaft, open_loop, control };

struct ScenarioConfig {
  std::string name;
  std::string description;
  std::string source;  // file it was read from
  ScenarioMode mode = ScenarioMode::open_loop;
  std::string params_file;
  RobotParams params;
  double horizon = 0.0;
  std::uint64_t seed = 0;

  // shaft
  int axis = coord::phi_p;
  double torque = 0.0;

  // open loop
  ControlInput torques;
  double dt = 0.01;

  std::optional<SensorModel> sensor;

  // control
  std::string reference;
  Gains gains = tune_gains(3.0);
  double control_rate = 1000.0;
  DisturbanceSchedule disturbance;
  CorridorSpec corridor;
  Figure8Spec figure8;
  WeaveSpec weave;
  double plan_dt = 0.01;
  double plan_mass_scale = 0.98;
  std::string plan_file;  // empty: generate the plan

  // feasibility
  bool feasibility = false;
  Vec3 box_ep = Vec3::Zero();
  Vec3 box_ev = Vec3::Zero();
  double torque_limit = 50.0;
  double feasibility_grid = 0.01;
  std::size_t feasibility_samples = 10000;

  TorqueBounds torque_bounds() const {
    TorqueBounds b;
    b.limits = {Interval::symmetric(torque_limit), Interval::symmetric(torque_limit),
                Interval::symmetric(torque_limit)};
    b.boxes = ErrorBoxes::symmetric(box_ep, box_ev);
    return b;
  }
};

namespace detail {

inline std::string resolve_path(const std::string& base_file, const std::string& rel) {
  namespace fs = std::filesystem;
  const fs::path p(rel);
  if (p.is_absolute() || base_file.empty()) return p.lexically_normal().string();
  return (fs::path(base_file).parent_path() / p).lexically_normal().string();
}

inline Vec3 get_vec3(const Config& cfg, const std::string& key) {
  const auto v = cfg.get_list(key);
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() != 3) throw ConfigError(cfg.origin() + ": key '" + key + "' needs 1 or 3 values");
  return {v[0], v[1], v[2]};
}

inline bool get_switch(const Config& cfg, const std::string& key, bool fallback) {
  if (!cfg.has(key)) return fallback;
  const auto& v = cfg.get_string(key);
  if (v == "on" || v == "true" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "no") return false;
  throw ConfigError(cfg.origin() + ": key '" + key + "' must be on or off");
}

}  // namespace detail

/// Parses and validates a scenario. Referenced files must exist.
inline ScenarioConfig scenario_from_config(const Config& cfg) {
  ScenarioConfig s;
  const std::string& origin = cfg.origin();
  auto fail = [&](const std::string& msg) { throw ConfigError(origin + ": " + msg); };
  s.source = origin;
  s.name = cfg.get_string("scenario.name");
  s.description = cfg.get_string("scenario.description", "");
  const std::string mode = cfg.get_string("scenario.mode");
  if (mode == "shaft")
    s.mode = ScenarioMode::shaft;
  else if (mode == "open-loop")
    s.mode = ScenarioMode::open_loop;
  else if (mode == "control")
    s.mode = ScenarioMode::control;
  else
    fail("unknown mode '" + mode + "'");

  s.params_file = detail::resolve_path(origin, cfg.get_string("scenario.params"));
  if (!std::filesystem::exists(s.params_file)) fail("params file not found: " + s.params_file);
  s.params = load_params(s.params_file);
  if (!detail::get_switch(cfg, "scenario.friction", true)) s.params = s.params.frictionless();
  s.horizon = cfg.get_double("scenario.horizon");
  if (!(s.horizon > 0.0)) fail("horizon must be > 0");
  s.seed = cfg.get_uint("scenario.seed", 0);

  if (cfg.has("sensor.kind")) {
    const auto kind = cfg.get_string("sensor.kind");
    if (kind != "none") {
      SensorModel m;
      if (kind == "encoder")
        m.kind = SensorKind::encoder;
      else if (kind == "imu")
        m.kind = SensorKind::imu;
      else
        fail("unknown sensor kind '" + kind + "'");
      m.sample_rate = cfg.get_double("sensor.rate", 100.0);
      m.sigma = cfg.get_double("sensor.sigma", 0.0);
      if (!(m.sample_rate > 0.0) || m.sigma < 0.0) fail("sensor rate must be > 0 and sigma >= 0");
      m.seed = s.seed;
      s.sensor = m;
    }
  }

  switch (s.mode) {
    case ScenarioMode::shaft: {
      const auto axis = cfg.get_string("shaft.axis");
      if (axis == "wheel")
        s.axis = coord::phi_r;
      else if (axis == "pivot")
        s.axis = coord::phi_p;
      else
        fail("shaft axis must be wheel or pivot");
      s.torque = cfg.get_double("shaft.torque");
      if (s.sensor) s.sensor->encoder_axis = s.axis;
      if (s.sensor && s.sensor->kind != SensorKind::encoder) fail("shaft scenarios only support an encoder");
      break;
    }
    case ScenarioMode::open_loop: {
      s.torques = ControlInput(detail::get_vec3(cfg, "open-loop.torques"));
      s.dt = cfg.get_double("open-loop.dt", 0.01);
      if (!(s.dt > 0.0)) fail("open-loop dt must be > 0");
      break;
    }
    case ScenarioMode::control: {
      s.reference = cfg.get_string("control.reference");
      if (cfg.has("control.gains")) {
        const auto path = detail::resolve_path(origin, cfg.get_string("control.gains"));
        if (!std::filesystem::exists(path)) fail("gains file not found: " + path);
        s.gains = gains_from_config(Config::load(path));
      } else {
        s.gains = gains_from_config(cfg);
      }
      s.control_rate = cfg.get_double("control.rate", 1000.0);
      if (!(s.control_rate > 0.0)) fail("control rate must be > 0");
      for (int k = 1; cfg.has("control.pulse" + std::to_string(k)); ++k) {
        const auto v = cfg.get_list("control.pulse" + std::to_string(k));
        if (v.size() != 4 || !(v[1] > v[0])) fail("pulse" + std::to_string(k) + " needs t_on < t_off, fx, fy");
        s.disturbance.pulses.push_back({v[0], v[1], Vec2(v[2], v[3])});
      }
      if (s.reference == "corridor") {
        s.corridor.speed = cfg.get_double("corridor.speed", s.corridor.speed);
        s.corridor.segment = cfg.get_double("corridor.segment", s.corridor.segment);
        if (cfg.has("corridor.turns")) {
          // Headings of the segments in degrees.
          s.corridor.directions.clear();
          for (double deg : cfg.get_list("corridor.turns")) {
            const double a = deg * std::numbers::pi / 180.0;
            s.corridor.directions.emplace_back(std::cos(a), std::sin(a));
          }
        }
        s.corridor.t_end = s.horizon;
      } else if (s.reference == "figure8") {
        s.figure8.radius = cfg.get_double("figure8.radius", s.figure8.radius);
        s.figure8.offset = cfg.get_double("figure8.offset", s.figure8.offset);
        s.figure8.period = cfg.get_double("figure8.period", s.figure8.period);
        s.figure8.alpha = cfg.get_double("figure8.alpha", s.figure8.alpha);
        s.figure8.t_end = s.horizon;
      } else if (s.reference == "plan") {
        s.plan_dt = cfg.get_double("plan.dt", s.plan_dt);
        s.plan_mass_scale = cfg.get_double("plan.mass_scale", s.plan_mass_scale);
        s.weave.cruise_speed = cfg.get_double("plan.cruise_speed", s.weave.cruise_speed);
        s.weave.ramp = cfg.get_double("plan.ramp", s.weave.ramp);
        s.weave.amplitude = cfg.get_double("plan.amplitude", s.weave.amplitude);
        s.weave.wavelength = cfg.get_double("plan.wavelength", s.weave.wavelength);
        s.weave.alpha_amplitude = cfg.get_double("plan.alpha_amplitude", s.weave.alpha_amplitude);
        s.weave.alpha_rate = cfg.get_double("plan.alpha_rate", s.weave.alpha_rate);
        s.weave.t_end = s.horizon;
        if (cfg.has("plan.file")) {
          s.plan_file = detail::resolve_path(origin, cfg.get_string("plan.file"));
          if (!std::filesystem::exists(s.plan_file)) fail("plan file not found: " + s.plan_file);
        }
        if (!(s.plan_dt > 0.0) || !(s.plan_mass_scale > 0.0)) fail("plan dt and mass_scale must be > 0");
      } else {
        fail("unknown reference '" + s.reference + "'");
      }
      if (cfg.has("feasibility.ep") || cfg.has("feasibility.ev")) {
        s.feasibility = true;
        s.box_ep = detail::get_vec3(cfg, "feasibility.ep").cwiseAbs();
        s.box_ev = detail::get_vec3(cfg, "feasibility.ev").cwiseAbs();
        s.torque_limit = cfg.get_double("feasibility.limit", s.torque_limit);
        s.feasibility_grid = cfg.get_double("feasibility.grid", s.feasibility_grid);
        s.feasibility_samples = cfg.get_uint("feasibility.samples", s.feasibility_samples);
        if (!(s.torque_limit > 0.0) || !(s.feasibility_grid > 0.0)) fail("feasibility limit and grid must be > 0");
      }
      break;
    }
  }
  return s;
}

inline ScenarioConfig load_scenario(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError(path + ": cannot open file");
  return scenario_from_config(Config::load(path));
}

/// Names of the scenarios shipped in `scenarios/`, in listing order.
inline const std::vector<std::string>& bundled_scenarios() {
  static const std::vector<std::string> names{"wheel-spin", "platform-spin", "chassis-excitation",
                                              "corridor",   "plan-tracking", "figure8"};
  return names;
}

/// A scenario argument is either a path to a .cfg file or a bundled name
/// looked up in the given directories.
inline std::string find_scenario(const std::string& arg, const std::vector<std::string>& dirs) {
  namespace fs = std::filesystem;
  if (fs::exists(arg) && fs::is_regular_file(arg)) return arg;
  for (const auto& d : dirs) {
    const fs::path p = fs::path(d) / (arg + ".cfg");
    if (fs::exists(p)) return p.string();
  }
  throw ConfigError("scenario '" + arg + "' not found");
}

/// Reference of a control scenario. Plan scenarios need the plan itself, see
/// scenario_plan.
inline ReferenceTrajectory scenario_reference(const ScenarioConfig& s) {
  if (s.reference == "corridor") return corridor_reference(s.corridor);
  if (s.reference == "figure8") return figure8_reference(s.figure8);
  if (s.reference == "plan") return weave_reference(s.weave);
  throw std::invalid_argument("scenario '" + s.name + "' has no reference");
}

/// Robot used to produce the actions of a generated plan: every mass and
/// inertia scaled by plan_mass_scale.
inline RobotParams plan_action_params(const ScenarioConfig& s) {
  RobotParams p = s.params;
  p.mc *= s.plan_mass_scale;
  p.mp *= s.plan_mass_scale;
  p.Ic *= s.plan_mass_scale;
  p.Ip *= s.plan_mass_scale;
  return p;
}

inline PlanData scenario_plan(const ScenarioConfig& s) {
  if (!s.plan_file.empty()) return load_plan_csv(s.plan_file);
  return generate_plan(s.params, weave_reference(s.weave), s.gains, s.plan_dt, plan_action_params(s));
}

/// Initial state: the corridor starts at rest at its first corner, the
/// figure-8 on its reference.
inline RobotState scenario_initial_state(const ScenarioConfig& s, const ReferenceTrajectory& ref) {
  if (s.reference == "corridor") {
    RobotState x;
    x.q.head<3>() = ref.at(ref.t_begin()).p;
    return x;
  }
  return state_on_reference(s.params, ref);
}

}  // namespace otbot
