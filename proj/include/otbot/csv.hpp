#pragma once

// CSV export of trajectories, sensor records and numeric tables, and the
// reader for planned trajectories. Numbers are written in the shortest form
// that round-trips to the same double.

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "otbot/config.hpp"
#include "otbot/simulator.hpp"

namespace otbot {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTrajectoryHeader =
    "t,x,y,alpha,phi_r,phi_l,phi_p,dx,dy,dalpha,dphi_r,dphi_l,dphi_p,tau_r,tau_l,tau_p";

/// Column-named table of doubles.
class CsvTable {
 public:
  CsvTable() = default;
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void add_row(std::vector<double> row) {
    if (row.size() != columns_.size()) throw CsvError("csv: row width does not match header");
    rows_.push_back(std::move(row));
  }
  void add_row(std::initializer_list<double> row) { add_row(std::vector<double>(row)); }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }

  void write(std::ostream& out) const {
    for (std::size_t j = 0; j < columns_.size(); ++j) out << (j ? "," : "") << columns_[j];
    out << '\n';
    for (const auto& r : rows_) {
      for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << format_double(r[j]);
      out << '\n';
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw CsvError(path + ": cannot write file");
    write(out);
  }

  std::string str() const {
    std::ostringstream ss;
    write(ss);
    return ss.str();
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
};

inline CsvTable trajectory_table(const SimTrajectory& traj) {
  std::vector<std::string> cols;
  std::stringstream hs(kTrajectoryHeader);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  CsvTable t(std::move(cols));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    std::vector<double> row{traj.times[i]};
    const auto& s = traj.states[i];
    for (int k = 0; k < 6; ++k) row.push_back(s.q[k]);
    for (int k = 0; k < 6; ++k) row.push_back(s.qdot[k]);
    row.insert(row.end(), {traj.inputs[i].tau_r, traj.inputs[i].tau_l, traj.inputs[i].tau_p});
    t.add_row(std::move(row));
  }
  return t;
}

inline CsvTable sensor_table(const SensorRecord& rec) {
  std::vector<std::string> cols{"t"};
  if (rec.kind == SensorKind::imu)
    cols.insert(cols.end(), {"ddx_p", "ddy_p", "dalpha"});
  else
    cols.push_back("speed");
  CsvTable t(std::move(cols));
  for (std::size_t i = 0; i < rec.size(); ++i) {
    std::vector<double> row{rec.times[i]};
    for (Eigen::Index j = 0; j < rec.outputs[i].size(); ++j) row.push_back(rec.outputs[i][j]);
    t.add_row(std::move(row));
  }
  return t;
}

/// Time-stamped states and actions read from a trajectory CSV.
struct PlanData {
  std::vector<double> times;
  std::vector<RobotState> states;
  std::vector<ControlInput> inputs;
};

/// Parses the trajectory schema. Rows must have 16 finite fields and strictly
/// increasing, uniformly spaced times; errors name the offending row.
inline PlanData read_plan_csv(std::istream& in, const std::string& origin = "<plan>") {
  std::string line;
  std::size_t row = 1;
  if (!std::getline(in, line)) throw CsvError(origin + ": empty file");
  std::string header;
  for (char c : line)
    if (c != ' ' && c != '\r') header.push_back(c);
  if (header != kTrajectoryHeader) throw CsvError(origin + ":1: unexpected header");

  PlanData plan;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      double x = 0.0;
      if (!detail::parse_double(rest.substr(0, comma), x) || !std::isfinite(x))
        throw CsvError(origin + ":" + std::to_string(row) + ": field " + std::to_string(v.size() + 1) +
                       " is not a finite number");
      v.push_back(x);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    if (v.size() != 16)
      throw CsvError(origin + ":" + std::to_string(row) + ": expected 16 fields, got " + std::to_string(v.size()));
    if (!plan.times.empty() && !(v[0] > plan.times.back()))
      throw CsvError(origin + ":" + std::to_string(row) + ": time is not increasing");
    plan.times.push_back(v[0]);
    RobotState s;
    for (int k = 0; k < 6; ++k) {
      s.q[k] = v[1 + k];
      s.qdot[k] = v[7 + k];
    }
    plan.states.push_back(s);
    plan.inputs.emplace_back(v[13], v[14], v[15]);
  }
  if (plan.times.size() < 3) throw CsvError(origin + ": need at least 3 rows");
  const double dt = plan.times[1] - plan.times[0];
  for (std::size_t i = 2; i < plan.times.size(); ++i)
    if (std::abs(plan.times[i] - plan.times[i - 1] - dt) > 1e-6 * dt)
      throw CsvError(origin + ":" + std::to_string(i + 2) + ": non-uniform time step");
  return plan;
}

inline PlanData load_plan_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(path + ": cannot open file");
  return read_plan_csv(in, path);
}

}  // namespace otbot
