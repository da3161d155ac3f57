// otbot command-line front end: simulate, identify, control, check-torques
// and scenarios. All outputs go under --out together with a manifest.json.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "otbot/otbot.hpp"

namespace fs = std::filesystem;
using namespace otbot;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitInternal = 1;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void add(std::string_view s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 1099511628211ull;
    }
    // field separator so ("ab","c") and ("a","bc") differ
    h_ ^= 0xffu;
    h_ *= 1099511628211ull;
  }
  void add_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    add(path);
    add(ss.str());
  }
  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h_;
    return os.str();
  }

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  try {
    return Config::parse("v = " + text, what).get_list("v");
  } catch (const ConfigError&) {
    throw UsageError(what + ": expected a comma-separated number list, got '" + text + "'");
  }
}

Vec3 parse_vec3(const std::string& text, const std::string& what) {
  const auto v = parse_numbers(text, what);
  if (v.size() == 1) return Vec3::Constant(v[0]);
  if (v.size() != 3) throw UsageError(what + ": expected 1 or 3 values");
  return {v[0], v[1], v[2]};
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path) || !fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("OTBOT_SEED");
  if (!v || !*v) return std::nullopt;
  std::uint64_t s = 0;
  const std::string_view sv(v);
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), s);
  if (ec != std::errc() || ptr != sv.data() + sv.size())
    throw UsageError("OTBOT_SEED must be an unsigned integer, got '" + std::string(v) + "'");
  return s;
}

// Seed precedence: --seed, then OTBOT_SEED, then the config value.
std::uint64_t pick_seed(const CLI::Option* flag, std::uint64_t flag_value, std::uint64_t config_value) {
  if (flag->count() > 0) return flag_value;
  if (auto s = env_seed()) return *s;
  return config_value;
}

std::vector<std::string> scenario_dirs() {
  std::vector<std::string> dirs{"scenarios"};
#ifdef OTBOT_SOURCE_DIR
  dirs.emplace_back(std::string(OTBOT_SOURCE_DIR) + "/scenarios");
#endif
  return dirs;
}

std::string default_params_file() {
  for (const auto& d : std::vector<std::string>{"params",
#ifdef OTBOT_SOURCE_DIR
                                                std::string(OTBOT_SOURCE_DIR) + "/params"
#endif
       }) {
    const auto p = fs::path(d) / "nominal.cfg";
    if (fs::exists(p)) return p.string();
  }
  return {};
}

nlohmann::json ode_json(const OdeOptions& o) {
  return {{"method", "dormand-prince-5(4)"}, {"rtol", o.rtol}, {"atol", o.atol}, {"h_min", o.h_min}};
}

// Output directory of one run and its manifest.
class Run {
 public:
  Run(std::string command, const std::string& out_dir) : command_(std::move(command)), dir_(out_dir) {
    start_ = std::chrono::steady_clock::now();
    started_ = std::time(nullptr);
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw ConfigError(out_dir + ": cannot create output directory");
    hash_.add(command_);
  }

  Fnv1a& hash() { return hash_; }
  void add_seed(const std::string& name, std::uint64_t s) { seeds_[name] = s; }
  void set_ode(const OdeOptions& o) { ode_ = ode_json(o); }
  void set(const std::string& key, nlohmann::json v) { extra_[key] = std::move(v); }

  void save(const std::string& name, const CsvTable& table) {
    table.save((dir_ / name).string());
    files_.push_back(name);
  }
  void save_text(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name);
    if (!out) throw CsvError((dir_ / name).string() + ": cannot write file");
    out << text;
    files_.push_back(name);
  }

  void finish() const {
    nlohmann::json m;
    m["tool"] = "otbot";
    m["version"] = OTBOT_VERSION;
    m["command"] = command_;
    m["config_hash"] = "fnv1a64:" + hash_.hex();
    m["seeds"] = seeds_;
    m["integrator"] = ode_;
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&started_));
    m["started_utc"] = buf;
    m["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m["files"] = files_;
    for (const auto& [k, v] : extra_.items()) m[k] = v;
    const fs::path tmp = dir_ / "manifest.json.tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw CsvError(tmp.string() + ": cannot write file");
      out << m.dump(2) << '\n';
      if (!out) throw CsvError(tmp.string() + ": write failed");
    }
    fs::rename(tmp, dir_ / "manifest.json");
  }

 private:
  std::string command_;
  fs::path dir_;
  Fnv1a hash_;
  nlohmann::json seeds_ = nlohmann::json::object();
  nlohmann::json ode_ = nlohmann::json::object();
  nlohmann::json extra_ = nlohmann::json::object();
  std::vector<std::string> files_;
  std::chrono::steady_clock::time_point start_;
  std::time_t started_;
};

std::string fmt(double v) { return format_double(v); }

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string scenario, params, torques, sensor, out;
  double duration = 0.0, dt = 0.01, sigma = -1.0, rate = 0.0;
  std::uint64_t seed = 0;
  OdeOptions ode;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* dt_opt = nullptr;
};

int cmd_simulate(const SimulateArgs& a) {
  ScenarioConfig s;
  if (!a.scenario.empty()) {
    s = load_scenario(find_scenario(a.scenario, scenario_dirs()));
    if (s.mode == ScenarioMode::control)
      throw UsageError("scenario '" + s.name + "' is a control scenario, run it with 'otbot control'");
  } else {
    if (a.params.empty() || a.torques.empty() || !(a.duration > 0.0))
      throw UsageError("simulate needs --scenario or --params, --torques and --duration");
    s.name = "custom";
    s.mode = ScenarioMode::open_loop;
  }
  if (!a.params.empty()) {
    require_file(a.params, "params file");
    s.params_file = a.params;
    s.params = load_params(a.params);
  }
  if (!a.torques.empty()) {
    if (s.mode == ScenarioMode::shaft) {
      s.torque = parse_numbers(a.torques, "--torques").at(0);
    } else {
      s.torques = ControlInput(parse_vec3(a.torques, "--torques"));
    }
  }
  if (a.duration > 0.0) s.horizon = a.duration;
  if (a.scenario.empty() || a.dt_opt->count() > 0) s.dt = a.dt;
  if (!a.sensor.empty()) {
    if (a.sensor == "none") {
      s.sensor.reset();
    } else {
      SensorModel m = s.sensor.value_or(SensorModel{});
      m.kind = a.sensor == "imu" ? SensorKind::imu : SensorKind::encoder;
      if (m.kind == SensorKind::encoder) m.encoder_axis = s.mode == ScenarioMode::shaft ? s.axis : coord::phi_p;
      s.sensor = m;
    }
  }
  if (s.sensor) {
    if (a.sigma >= 0.0) s.sensor->sigma = a.sigma;
    if (a.rate > 0.0) s.sensor->sample_rate = a.rate;
  }
  if (s.mode == ScenarioMode::shaft && s.sensor && s.sensor->kind != SensorKind::encoder)
    throw UsageError("shaft scenarios only support an encoder");
  s.seed = pick_seed(a.seed_opt, a.seed, s.seed);
  if (s.sensor) s.sensor->seed = s.seed;
  s.params.validate();

  Run run("simulate", a.out);
  run.hash().add(s.name);
  if (!s.source.empty()) run.hash().add_file(s.source);
  run.hash().add(params_to_text(s.params));
  run.hash().add(std::to_string(static_cast<int>(s.mode)) + "|" + fmt(s.horizon) + "|" + fmt(s.dt) + "|" +
                 fmt(s.torque) + "|" + fmt(s.torques.tau_r) + "," + fmt(s.torques.tau_l) + "," +
                 fmt(s.torques.tau_p));
  if (s.sensor)
    run.hash().add(std::to_string(static_cast<int>(s.sensor->kind)) + "|" + fmt(s.sensor->sigma) + "|" +
                   fmt(s.sensor->sample_rate));
  run.hash().add(fmt(a.ode.rtol) + "|" + fmt(a.ode.atol));
  run.add_seed("sensor", s.seed);
  run.set_ode(a.ode);
  run.set("scenario", s.name);

  if (s.mode == ScenarioMode::shaft) {
    const auto sp = shaft_params(s.params, s.axis);
    const double rate = s.sensor ? s.sensor->sample_rate : 100.0;
    const auto times = detail::uniform_grid(0.0, 1.0 / rate, s.horizon);
    const auto speeds = simulate_shaft(sp, s.torque, times, a.ode);
    CsvTable t({"t", "speed", "speed_closed_form"});
    for (std::size_t k = 0; k < times.size(); ++k)
      t.add_row({times[k], speeds[k], shaft_speed_closed_form(sp, s.torque, times[k])});
    run.save("shaft.csv", t);
    if (s.sensor) {
      SensorModel m = *s.sensor;
      m.encoder_axis = s.axis;
      run.save("sensors.csv", sensor_table(sample_shaft_encoder(sp, s.torque, s.horizon, m, a.ode)));
    }
    std::cout << "simulate: " << s.name << " shaft speed at " << fmt(s.horizon) << " s = " << fmt(speeds.back())
              << " rad/s\n";
  } else {
    const auto controls = ControlSequence::constant(s.torques, s.horizon, s.dt);
    std::vector<double> samples;
    if (s.sensor) samples = s.sensor->sample_times(0.0, s.horizon);
    const auto traj = integrate(s.params, RobotState{}, controls, s.horizon, a.ode, {}, samples);
    run.save("trajectory.csv", trajectory_table(traj));
    if (s.sensor) run.save("sensors.csv", sensor_table(sample_sensors(traj, *s.sensor, s.params)));
    double worst = 0.0;
    for (const auto& st : traj.states) worst = std::max(worst, constraint_violation(s.params, st.q, st.qdot));
    const auto& last = traj.states.back();
    std::cout << "simulate: " << s.name << " t = " << fmt(traj.times.back()) << " x = " << fmt(last.q[0])
              << " y = " << fmt(last.q[1]) << " alpha = " << fmt(last.q[2]) << " max|Jqdot| = " << fmt(worst)
              << " steps = " << traj.stats.steps << '\n';
  }
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// identify

struct IdentifyArgs {
  std::string step = "all", params, guess, platform, deviations = "0.05,0.10,0.15,0.20,0.25", out;
  std::uint64_t seed = 0;
  unsigned runs = 1, sweep_seeds = 10, jobs = 1;
  bool no_sweep = false, isolated = false;
  CLI::Option* seed_opt = nullptr;
};

// Absolute-error tolerances of the estimates.
double tolerance_of(const std::string& step, Param p) {
  if (step.rfind("step1", 0) == 0) return p == Param::Ia || p == Param::bw ? 1e-3 : 5e-3;
  switch (p) {
    case Param::mc:
    case Param::mp: return 0.2;
    case Param::Ic:
    case Param::Ip: return 1e-2;
    default: return 1e-3;
  }
}

std::string display_name(const std::string& step, Param p) {
  if (step == "step1-platform" && p == Param::Ip) return "Ip0";
  return std::string(param_name(p));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

CsvTable fit_table(const StepReport& r, const OdeOptions& ode) {
  const auto pred = predict(r.experiment, r.fitted, ode);
  const auto& rec = r.experiment.record;
  std::vector<std::string> cols{"t"};
  const auto names = rec.kind == SensorKind::imu ? std::vector<std::string>{"ddx_p", "ddy_p", "dalpha"}
                                                 : std::vector<std::string>{"speed"};
  for (const auto& n : names) {
    cols.push_back(n + "_measured");
    cols.push_back(n + "_predicted");
  }
  CsvTable t(cols);
  for (std::size_t k = 0; k < rec.size(); ++k) {
    std::vector<double> row{rec.times[k]};
    for (Eigen::Index j = 0; j < rec.outputs[k].size(); ++j) {
      row.push_back(rec.outputs[k][j]);
      row.push_back(pred.outputs[k][j]);
    }
    t.add_row(std::move(row));
  }
  return t;
}

int cmd_identify(const IdentifyArgs& a) {
  int last_step = 3;
  if (a.step == "1") last_step = 1;
  if (a.step == "2") last_step = 2;

  PipelineConfig cfg;
  std::string params_file = a.params.empty() ? default_params_file() : a.params;
  if (!a.params.empty()) require_file(a.params, "params file");
  if (!params_file.empty()) cfg.truth = load_params(params_file);
  if (!a.guess.empty()) {
    require_file(a.guess, "guess file");
    const auto g = Config::load(a.guess);
    cfg.basic_guess = {g.get_double("step1.Ia", cfg.basic_guess.Ia), g.get_double("step1.bw", cfg.basic_guess.bw),
                       g.get_double("step1.Ip0", cfg.basic_guess.Ip0), g.get_double("step1.bp", cfg.basic_guess.bp)};
    cfg.chassis_guess = {g.get_double("step2.mc", cfg.chassis_guess.m), g.get_double("step2.Ic", cfg.chassis_guess.I),
                         g.get_double("step2.xB", cfg.chassis_guess.x), g.get_double("step2.yB", cfg.chassis_guess.y)};
    cfg.platform_guess = {g.get_double("step3.mp", cfg.platform_guess.m),
                          g.get_double("step3.Ip", cfg.platform_guess.I),
                          g.get_double("step3.xF", cfg.platform_guess.x),
                          g.get_double("step3.yF", cfg.platform_guess.y)};
  }
  if (!a.platform.empty()) {
    const auto v = parse_numbers(a.platform, "--platform");
    if (v.size() != 4) throw UsageError("--platform needs m, I, x, y");
    cfg.working_platform = {v[0], v[1], v[2], v[3]};
  }
  cfg.ident.lsq.jobs = std::max(1u, a.jobs);
  cfg.chain_estimates = !a.isolated;
  const std::uint64_t seed0 = pick_seed(a.seed_opt, a.seed, 0);
  const unsigned runs = std::max(1u, a.runs);

  Run run("identify", a.out);
  if (!params_file.empty()) run.hash().add_file(params_file);
  if (!a.guess.empty()) run.hash().add_file(a.guess);
  run.hash().add(a.step + "|" + a.platform + "|" + std::to_string(runs) + "|" + (a.isolated ? "isolated" : "chained") + "|" + (a.no_sweep ? "nosweep" : "sweep") +
                 "|" + a.deviations + "|" + std::to_string(a.sweep_seeds));
  run.set_ode(cfg.truth_ode);
  run.set("fit_integrator", {{"fit", ode_json(cfg.ident.fit_ode)}, {"polish", ode_json(cfg.ident.polish_ode)}});

  CsvTable est({"run", "seed", "step", "param", "truth", "estimate", "abs_error", "tolerance", "within"});
  std::ostringstream rep;
  rep << "otbot identification report\n";
  rep << "steps run: 1.." << last_step << ", runs: " << runs << ", first seed: " << seed0 << "\n";
  rep << "earlier-step parameters: " << (a.isolated ? "true values" : "estimates") << "\n";
  // step -> param -> errors over runs
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::vector<double>>>>> errs;
  for (unsigned k = 0; k < runs; ++k) {
    cfg.seed = seed0 + k;
    run.add_seed("run" + std::to_string(k), cfg.seed);
    const auto res = run_pipeline(cfg, last_step);
    for (std::size_t ri = 0; ri < res.reports.size(); ++ri) {
      const auto& r = res.reports[ri];
      if (k == 0) {
        errs.push_back({r.name, {}});
        rep << "\n[" << r.name << "] experiment " << r.experiment.name << ", " << r.experiment.record.size()
            << " samples, solver " << (r.estimate.converged ? "converged" : "stopped") << " (" << r.estimate.reason
            << ", " << r.estimate.iterations << " iterations), loss " << fmt(r.estimate.loss) << "\n";
        if (!r.fixed.empty()) {
          rep << "  held fixed:";
          for (const auto& [p, src] : r.fixed) rep << ' ' << param_name(p) << '(' << src << ')';
          rep << '\n';
        }
        run.save("fit_" + r.name + ".csv", fit_table(r, cfg.ident.polish_ode));
      }
      const Eigen::VectorXd e = r.abs_errors();
      for (std::size_t i = 0; i < r.names.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        const std::string pname = display_name(r.name, r.names[i]);
        const double tol = tolerance_of(r.name, r.names[i]);
        est.add_row({static_cast<double>(k), static_cast<double>(cfg.seed), static_cast<double>(ri),
                     static_cast<double>(static_cast<int>(r.names[i])), r.truth[idx], r.estimate.values[idx], e[idx],
                     tol, e[idx] <= tol ? 1.0 : 0.0});
        if (k == 0) errs[ri].second.push_back({pname, {}});
        errs[ri].second[i].second.push_back(e[idx]);
        if (k == 0)
          rep << "  " << std::left << std::setw(4) << pname << " truth " << std::setw(10) << fmt(r.truth[idx])
              << " estimate " << std::setw(22) << fmt(r.estimate.values[idx]) << " |error| " << std::setw(24)
              << fmt(e[idx]) << " tol " << fmt(tol) << (e[idx] <= tol ? "  ok" : "  OUT") << '\n';
      }
    }
  }
  run.save("estimates.csv", est);
  // step and param columns in estimates.csv are codes; keep a key next to it
  {
    std::ostringstream key;
    key << "step codes:";
    for (std::size_t i = 0; i < errs.size(); ++i) key << ' ' << i << '=' << errs[i].first;
    key << "\nparam codes:";
    for (Param p : kAllParams) key << ' ' << static_cast<int>(p) << '=' << param_name(p);
    key << '\n';
    run.save_text("estimates_key.txt", key.str());
  }
  if (runs > 1) {
    rep << "\nmedian absolute error over " << runs << " runs\n";
    for (std::size_t ri = 0; ri < errs.size(); ++ri) {
      for (const auto& [pname, v] : errs[ri].second) {
        const double m = median(v);
        Param p{};
        for (Param q : kAllParams)
          if (display_name(errs[ri].first, q) == pname || std::string(param_name(q)) == pname) p = q;
        const double tol = tolerance_of(errs[ri].first, p);
        rep << "  " << std::left << std::setw(16) << errs[ri].first << std::setw(4) << pname << ' ' << std::setw(24)
            << fmt(m) << " tol " << fmt(tol) << (m <= tol ? "  ok" : "  OUT") << '\n';
      }
    }
  }

  if (last_step == 3 && !a.no_sweep) {
    SweepConfig sc;
    sc.known = with_platform(cfg.truth, {cfg.truth.mp, cfg.truth.Ip, 0.0, 0.0});
    sc.truth_platform = cfg.working_platform;
    sc.excitation = cfg.excitation;
    sc.window = cfg.platform_window;
    sc.imu_sigma = cfg.imu_sigma;
    sc.sample_rate = cfg.sample_rate;
    sc.ident = cfg.ident;
    sc.ident.lsq.jobs = 1;
    const auto devs = parse_numbers(a.deviations, "--deviations");
    std::vector<std::uint64_t> seeds;
    for (unsigned k = 0; k < a.sweep_seeds; ++k) seeds.push_back(seed0 + k);
    run.set("sweep_seeds", seeds);
    const auto cells = sensitivity_sweep(sc, devs, seeds, std::max(1u, a.jobs));
    CsvTable t({"deviation", "seed", "mp", "Ip", "xF", "yF", "err_mp", "err_Ip", "err_xF", "err_yF", "gap_mp",
                "gap_Ip", "gap_xF", "gap_yF", "solver_converged", "converged", "within_tolerance", "loss"});
    std::size_t conv = 0, within = 0;
    for (const auto& c : cells) {
      t.add_row({c.deviation, static_cast<double>(c.seed), c.estimate[0], c.estimate[1], c.estimate[2],
                 c.estimate[3], c.abs_errors[0], c.abs_errors[1], c.abs_errors[2], c.abs_errors[3], c.basin_gap[0],
                 c.basin_gap[1], c.basin_gap[2], c.basin_gap[3], c.solver_converged ? 1.0 : 0.0,
                 c.converged ? 1.0 : 0.0, c.within_tolerance ? 1.0 : 0.0, c.loss});
      conv += c.converged;
      within += c.within_tolerance;
    }
    run.save("sweep.csv", t);
    rep << "\ninitial-guess sweep: " << cells.size() << " cells, " << conv
        << " reach the optimum of a fit started at the truth, " << within << " within tolerance\n";
  }
  run.save_text("report.txt", rep.str());
  std::cout << rep.str();
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// control and check-torques

struct ControlArgs {
  std::string scenario, params, gains, plan, twist = "state", out, ep, ev;
  double rate = 0.0, limit = 0.0, grid = 0.0, rtol = 0.0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  bool no_feasibility = false;
  CLI::Option* seed_opt = nullptr;
};

ScenarioConfig control_scenario(const ControlArgs& a, Run* run) {
  std::string name = a.scenario == "plan" ? "plan-tracking" : a.scenario;
  auto s = load_scenario(find_scenario(name, scenario_dirs()));
  if (s.mode != ScenarioMode::control) throw UsageError("scenario '" + s.name + "' is not a control scenario");
  if (!a.params.empty()) {
    require_file(a.params, "params file");
    const bool frictionless = s.params.bw == 0.0 && s.params.bp == 0.0;
    s.params_file = a.params;
    s.params = load_params(a.params);
    if (frictionless) s.params = s.params.frictionless();
  }
  if (!a.gains.empty()) {
    require_file(a.gains, "gains file");
    s.gains = gains_from_config(Config::load(a.gains));
  }
  if (!a.plan.empty()) {
    if (s.reference != "plan") throw UsageError("--plan only applies to the plan-tracking scenario");
    require_file(a.plan, "plan file");
    s.plan_file = a.plan;
  }
  if (a.rate > 0.0) s.control_rate = a.rate;
  if (!a.ep.empty() || !a.ev.empty()) {
    s.feasibility = true;
    if (!a.ep.empty()) s.box_ep = parse_vec3(a.ep, "--ep").cwiseAbs();
    if (!a.ev.empty()) s.box_ev = parse_vec3(a.ev, "--ev").cwiseAbs();
  }
  if (a.limit > 0.0) s.torque_limit = a.limit;
  if (a.grid > 0.0) s.feasibility_grid = a.grid;
  if (a.samples > 0) s.feasibility_samples = a.samples;
  s.seed = pick_seed(a.seed_opt, a.seed, s.seed);
  s.params.validate();
  if (run) {
    run->hash().add_file(s.source);
    run->hash().add(params_to_text(s.params));
    if (!a.gains.empty()) run->hash().add_file(a.gains);
    if (!s.plan_file.empty()) run->hash().add_file(s.plan_file);
    std::ostringstream o;
    o << s.control_rate << '|' << s.box_ep.transpose() << '|' << s.box_ev.transpose() << '|' << s.torque_limit << '|'
      << s.feasibility_grid << '|' << s.feasibility_samples << '|' << a.twist << '|' << a.rtol << '|'
      << a.no_feasibility;
    run->hash().add(o.str());
    run->add_seed("monte_carlo", s.seed);
    run->set("scenario", s.name);
  }
  return s;
}

struct Feasibility {
  FeasibilityReport report;
  EnclosureCheck mc;
};

Feasibility run_feasibility(const ScenarioConfig& s, const ReferenceTrajectory& ref, const Vec3& joints0, Run& run) {
  Feasibility f;
  const auto bounds = s.torque_bounds();
  f.report = torque_feasibility(s.params, ref, s.gains, bounds, s.feasibility_grid, joints0);
  f.mc = monte_carlo_enclosure(f.report, s.gains, bounds.boxes, s.feasibility_samples, s.seed);
  CsvTable t({"t", "u_r_lo", "u_r_hi", "u_l_lo", "u_l_hi", "u_p_lo", "u_p_hi", "u_traj_r_lo", "u_traj_r_hi",
              "u_traj_l_lo", "u_traj_l_hi", "u_traj_p_lo", "u_traj_p_hi", "u_corr_r_lo", "u_corr_r_hi",
              "u_corr_l_lo", "u_corr_l_hi", "u_corr_p_lo", "u_corr_p_hi", "ok"});
  for (const auto& p : f.report.points) {
    std::vector<double> row{p.t};
    for (const auto* iv : {&p.torques.u, &p.torques.u_traj, &p.torques.u_corr})
      for (const auto& i : *iv) row.insert(row.end(), {i.lo, i.hi});
    row.push_back(p.ok ? 1.0 : 0.0);
    t.add_row(std::move(row));
  }
  run.save("feasibility.csv", t);
  std::ostringstream o;
  o << "feasible: " << (f.report.ok ? "yes" : "no") << '\n';
  o << "torque limit: " << fmt(s.torque_limit) << " N m per motor\n";
  o << "error box: ep radius " << s.box_ep.transpose() << ", ev radius " << s.box_ev.transpose() << '\n';
  o << "grid points: " << f.report.points.size() << " (step " << fmt(s.feasibility_grid) << " s)\n";
  o << "peak |u| bound: " << fmt(f.report.peak_abs[0]) << ", " << fmt(f.report.peak_abs[1]) << ", "
    << fmt(f.report.peak_abs[2]) << '\n';
  if (!f.report.ok) o << "first violation at t = " << fmt(f.report.first_violation) << " s\n";
  o << "monte carlo: " << f.mc.samples << " samples, " << f.mc.violations << " outside the bounds\n";
  run.save_text("feasibility.txt", o.str());
  std::cout << o.str();
  return f;
}

CsvTable error_table(const ClosedLoopResult& r) {
  CsvTable t({"t", "ep_x", "ep_y", "ep_alpha", "ev_x", "ev_y", "ev_alpha", "u_traj_r", "u_traj_l", "u_traj_p",
              "u_corr_r", "u_corr_l", "u_corr_p"});
  for (std::size_t k = 0; k < r.errors.times.size(); ++k) {
    const auto &ep = r.errors.ep[k], &ev = r.errors.ev[k], &ut = r.u_traj[k], &uc = r.u_corr[k];
    t.add_row({r.errors.times[k], ep[0], ep[1], ep[2], ev[0], ev[1], ev[2], ut[0], ut[1], ut[2], uc[0], uc[1], uc[2]});
  }
  return t;
}

int cmd_control(const ControlArgs& a) {
  Run run("control", a.out);
  auto s = control_scenario(a, &run);
  ClosedLoopOptions opts;
  opts.control_rate = s.control_rate;
  opts.disturbance = s.disturbance;
  opts.twist = a.twist == "motor" ? TwistSource::motor_speeds : TwistSource::state;
  if (a.rtol > 0.0) opts.ode.rtol = a.rtol;
  run.set_ode(opts.ode);

  std::optional<PlanData> plan;
  std::optional<ReferenceTrajectory> ref;
  RobotState x0;
  std::ostringstream sum;
  sum << "scenario: " << s.name << '\n';
  if (s.reference == "plan") {
    plan = scenario_plan(s);
    run.save("plan.csv", trajectory_table(plan_as_trajectory(*plan)));
    ref = plan_reference(*plan);
    x0 = plan->states.front();
    const auto replay = open_loop_replay(s.params, *plan, opts.ode);
    run.save("replay.csv", trajectory_table(replay.traj));
    CsvTable d({"t", "drift"});
    for (std::size_t k = 0; k < plan->times.size(); ++k) d.add_row({plan->times[k], replay.drift[k]});
    run.save("drift.csv", d);
    sum << "open-loop drift: max " << fmt(replay.max_drift) << " m, final " << fmt(replay.final_drift) << " m\n";
  } else {
    ref = scenario_reference(s);
    x0 = scenario_initial_state(s, *ref);
  }

  const auto res = closed_loop_simulate(s.params, x0, *ref, s.gains, ref->t_end(), opts);
  run.save("trajectory.csv", trajectory_table(res.traj));
  run.save("errors.csv", error_table(res));

  double ep_max = 0, ea_max = 0, ev_max = 0, eva_max = 0, jq = 0, hol = 0;
  for (std::size_t k = 0; k < res.traj.size(); ++k) {
    ep_max = std::max(ep_max, res.errors.ep[k].head<2>().norm());
    ea_max = std::max(ea_max, std::abs(res.errors.ep[k][2]));
    ev_max = std::max(ev_max, res.errors.ev[k].head<2>().norm());
    eva_max = std::max(eva_max, std::abs(res.errors.ev[k][2]));
    const auto& st = res.traj.states[k];
    jq = std::max(jq, constraint_violation(s.params, st.q, st.qdot));
    hol = std::max(hol, std::abs(holonomic_residual(s.params, st.q, x0.q)));
  }
  sum << "gains: kp " << s.gains.kp.transpose() << ", kv " << s.gains.kv.transpose() << '\n';
  sum << "max position error " << fmt(ep_max) << " m, alpha " << fmt(ea_max) << " rad\n";
  sum << "max velocity error " << fmt(ev_max) << " m/s, alpha rate " << fmt(eva_max) << " rad/s\n";
  sum << "max |J qdot| " << fmt(jq) << ", max |holonomic residual| " << fmt(hol) << '\n';

  // Transients: after each disturbance ends, or after each corridor segment
  // starts and when the corridor motion stops, up to the next event.
  std::vector<double> events;
  for (const auto& p : s.disturbance.pulses) events.push_back(p.t_off);
  if (s.reference == "corridor") {
    const double leg = s.corridor.segment / s.corridor.speed;
    for (std::size_t i = 0; i <= s.corridor.directions.size(); ++i)
      if (const double t = static_cast<double>(i) * leg; t < ref->t_end()) events.push_back(t);
  }
  std::sort(events.begin(), events.end());
  if (!events.empty()) {
    const auto pos = planar_norm(res.errors.ep), vel = planar_norm(res.errors.ev);
    // the window stops half a control period before the next event
    const double gap = 0.5 / s.control_rate;
    CsvTable st({"t_from", "t_to", "position_peak", "position_settling", "velocity_peak", "velocity_settling"});
    for (std::size_t i = 0; i < events.size(); ++i) {
      double t_to = ref->t_end();
      for (const auto& p : s.disturbance.pulses)
        if (p.t_on > events[i] + 1e-9) t_to = std::min(t_to, p.t_on - gap);
      if (i + 1 < events.size()) t_to = std::min(t_to, events[i + 1] - gap);
      const auto sp = settling_after(res.errors.times, pos, events[i], t_to);
      const auto sv = settling_after(res.errors.times, vel, events[i], t_to);
      st.add_row({events[i], t_to, sp.peak, sp.time, sv.peak, sv.time});
      sum << "transient from " << fmt(events[i]) << " s: position peak " << fmt(sp.peak) << " settles to 2% in "
          << (sp.settled ? fmt(sp.time) + " s" : std::string("n/a")) << ", velocity peak " << fmt(sv.peak)
          << " settles in " << (sv.settled ? fmt(sv.time) + " s" : std::string("n/a")) << '\n';
    }
    run.save("settling.csv", st);
  }
  run.save_text("summary.txt", sum.str());
  std::cout << sum.str();

  if (s.feasibility && !a.no_feasibility) run_feasibility(s, *ref, x0.q.tail<3>(), run);
  run.finish();
  return 0;
}

int cmd_check_torques(const ControlArgs& a) {
  Run run("check-torques", a.out);
  auto s = control_scenario(a, &run);
  if (!s.feasibility) throw UsageError("scenario '" + s.name + "' has no [feasibility] section, pass --ep and --ev");
  run.set_ode(OdeOptions{});
  std::optional<ReferenceTrajectory> ref;
  Vec3 joints0 = Vec3::Zero();
  if (s.reference == "plan") {
    const auto plan = scenario_plan(s);
    ref = plan_reference(plan);
    joints0 = plan.states.front().q.tail<3>();
  } else {
    ref = scenario_reference(s);
  }
  run_feasibility(s, *ref, joints0, run);
  run.finish();
  return 0;
}

// ---------------------------------------------------------------------------
// scenarios

int cmd_scenarios(bool check) {
  int failures = 0;
  for (const auto& name : bundled_scenarios()) {
    try {
      const auto s = load_scenario(find_scenario(name, scenario_dirs()));
      if (s.name != name) throw ConfigError(s.source + ": declares name '" + s.name + "'");
      if (check) {
        if (s.mode == ScenarioMode::control) {
          const auto ref = scenario_reference(s);
          (void)scenario_initial_state(s, ref);
        }
        std::cout << "ok   " << name << '\n';
      } else {
        std::cout << std::left << std::setw(20) << name << s.description << '\n';
      }
    } catch (const std::exception& e) {
      ++failures;
      std::cout << (check ? "FAIL " : "") << name << ": " << one_line(e.what()) << '\n';
    }
  }
  return failures ? kExitUsage : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"otbot: Otbot robot simulation, identification and control"};
  app.set_version_flag("--version", OTBOT_VERSION);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "open-loop or single-shaft simulation");
  c_sim->add_option("--scenario", sim.scenario, "bundled scenario name or .cfg path");
  c_sim->add_option("--params", sim.params, "robot parameter file");
  c_sim->add_option("--torques", sim.torques, "constant motor torques tau_r,tau_l,tau_p (N m)");
  c_sim->add_option("--duration", sim.duration, "horizon (s)");
  sim.dt_opt = c_sim->add_option("--dt", sim.dt, "control hold period (s)")->check(CLI::PositiveNumber);
  c_sim->add_option("--sensor", sim.sensor, "none | encoder | imu")->check(CLI::IsMember({"none", "encoder", "imu"}));
  c_sim->add_option("--sigma", sim.sigma, "sensor noise standard deviation")->check(CLI::NonNegativeNumber);
  c_sim->add_option("--rate", sim.rate, "sensor sample rate (Hz)")->check(CLI::PositiveNumber);
  sim.seed_opt = c_sim->add_option("--seed", sim.seed, "noise seed");
  c_sim->add_option("--rtol", sim.ode.rtol, "integrator relative tolerance")->check(CLI::PositiveNumber);
  c_sim->add_option("--atol", sim.ode.atol, "integrator absolute tolerance")->check(CLI::PositiveNumber);
  c_sim->add_option("--out", sim.out, "output directory")->required();

  IdentifyArgs id;
  auto* c_id = app.add_subcommand("identify", "three-step parameter identification on synthetic data");
  c_id->add_option("--step", id.step, "1 | 2 | 3 | all")->check(CLI::IsMember({"1", "2", "3", "all"}));
  c_id->add_option("--params", id.params, "true robot parameters (default params/nominal.cfg)");
  c_id->add_option("--guess", id.guess, "initial guesses ([step1], [step2], [step3])");
  c_id->add_option("--platform", id.platform, "true working platform m,I,x,y (default unloaded)");
  id.seed_opt = c_id->add_option("--seed", id.seed, "noise seed of the first run");
  c_id->add_option("--runs", id.runs, "repeat with consecutive seeds and report medians")->check(CLI::PositiveNumber);
  c_id->add_flag("--isolated", id.isolated, "give each step the true values of earlier-step parameters");
  c_id->add_flag("--no-sweep", id.no_sweep, "skip the initial-guess sweep of step 3");
  c_id->add_option("--deviations", id.deviations, "sweep deviations (fractions)");
  c_id->add_option("--sweep-seeds", id.sweep_seeds, "sweep seeds per deviation")->check(CLI::PositiveNumber);
  c_id->add_option("--jobs", id.jobs, "worker threads")->check(CLI::PositiveNumber);
  c_id->add_option("--out", id.out, "output directory")->required();

  auto add_control_options = [](CLI::App* c, ControlArgs& ca) {
    c->add_option("--scenario", ca.scenario, "corridor | plan | figure8, or a .cfg path")->required();
    c->add_option("--params", ca.params, "robot parameter file");
    c->add_option("--gains", ca.gains, "gain file");
    c->add_option("--plan", ca.plan, "plan CSV to track (plan scenario)");
    c->add_option("--ep", ca.ep, "position error box radius (1 or 3 values)");
    c->add_option("--ev", ca.ev, "velocity error box radius (1 or 3 values)");
    c->add_option("--limit", ca.limit, "motor torque limit (N m)")->check(CLI::PositiveNumber);
    c->add_option("--grid", ca.grid, "feasibility grid step (s)")->check(CLI::PositiveNumber);
    c->add_option("--samples", ca.samples, "Monte-Carlo samples per grid point");
    ca.seed_opt = c->add_option("--seed", ca.seed, "Monte-Carlo seed");
    c->add_option("--out", ca.out, "output directory")->required();
  };
  ControlArgs ctl;
  auto* c_ctl = app.add_subcommand("control", "closed-loop computed-torque tracking");
  add_control_options(c_ctl, ctl);
  c_ctl->add_option("--rate", ctl.rate, "control rate (Hz)")->check(CLI::PositiveNumber);
  c_ctl->add_option("--rtol", ctl.rtol, "integrator relative tolerance")->check(CLI::PositiveNumber);
  c_ctl->add_option("--twist", ctl.twist, "state | motor")->check(CLI::IsMember({"state", "motor"}));
  c_ctl->add_flag("--no-feasibility", ctl.no_feasibility, "skip the torque feasibility check");

  ControlArgs chk;
  auto* c_chk = app.add_subcommand("check-torques", "interval torque feasibility along a reference");
  add_control_options(c_chk, chk);

  bool check = false;
  auto* c_scn = app.add_subcommand("scenarios", "list the bundled scenarios");
  c_scn->add_flag("--check", check, "parse and validate every bundled scenario");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "otbot: error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }

  diagnostics::set_handler([](const std::string& msg) { std::cerr << "otbot: warning: " << one_line(msg) << '\n'; });
  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_id) return cmd_identify(id);
    if (*c_ctl) return cmd_control(ctl);
    if (*c_chk) return cmd_check_torques(chk);
    if (*c_scn) return cmd_scenarios(check);
  } catch (const UsageError& e) {
    std::cerr << "otbot: error: usage: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "otbot: error: config: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const InvalidParams& e) {
    std::cerr << "otbot: error: config: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const CsvError& e) {
    std::cerr << "otbot: error: io: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const IntegrationError& e) {
    std::cerr << "otbot: error: numerical: " << one_line(e.what()) << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "otbot: error: internal: " << one_line(e.what()) << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}
