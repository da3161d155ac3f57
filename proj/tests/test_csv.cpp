#include <gtest/gtest.h>

#include <sstream>

#include "otbot/csv.hpp"

using namespace otbot;

TEST(Csv, TrajectoryRoundTrip) {
  const auto p = RobotParams::nominal();
  const auto traj = integrate(p, {}, ControlSequence::constant({6, -10, 6}, 0.2, 0.01), 0.2);
  std::stringstream ss;
  trajectory_table(traj).write(ss);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kTrajectoryHeader);
  const auto plan = read_plan_csv(ss);
  ASSERT_EQ(plan.times.size(), traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    EXPECT_EQ(plan.times[i], traj.times[i]);
    EXPECT_EQ(plan.states[i].q, traj.states[i].q);
    EXPECT_EQ(plan.states[i].qdot, traj.states[i].qdot);
    EXPECT_EQ(plan.inputs[i], traj.inputs[i]);
  }
}

TEST(Csv, SensorTableColumns) {
  SensorRecord rec;
  rec.kind = SensorKind::imu;
  rec.times = {0.0};
  rec.outputs = {Eigen::Vector3d(1, 2, 3)};
  EXPECT_EQ(sensor_table(rec).str(), "t,ddx_p,ddy_p,dalpha\n0,1,2,3\n");
}

namespace {
std::string plan_text(const std::string& rows) { return std::string(kTrajectoryHeader) + "\n" + rows; }
const std::string kRow0 = "0,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0\n";
const std::string kRow1 = "0.01,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0\n";
const std::string kRow2 = "0.02,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0\n";

void expect_error(const std::string& text, const std::string& fragment) {
  std::stringstream ss(text);
  try {
    read_plan_csv(ss, "plan.csv");
    FAIL() << "expected CsvError";
  } catch (const CsvError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}
}  // namespace

TEST(Csv, PlanDiagnostics) {
  expect_error("", "empty");
  expect_error("t,x\n" + kRow0, "plan.csv:1");
  expect_error(plan_text(kRow0 + "0.01,0,0\n" + kRow2), "plan.csv:3: expected 16 fields");
  expect_error(plan_text(kRow0 + kRow1 + "0.02,0,0,0,0,zz,0,0,0,0,0,0,0,1,1,0\n"), "plan.csv:4: field 6");
  expect_error(plan_text(kRow0 + kRow0 + kRow1), "plan.csv:3: time is not increasing");
  expect_error(plan_text(kRow0 + kRow1 + "0.05,0,0,0,0,0,0,0,0,0,0,0,0,1,1,0\n"), "plan.csv:4: non-uniform");
  expect_error(plan_text(kRow0 + kRow1), "at least 3 rows");
  std::stringstream ok(plan_text(kRow0 + kRow1 + kRow2));
  EXPECT_EQ(read_plan_csv(ok).times.size(), 3u);
}
