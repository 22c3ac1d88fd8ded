#include <gtest/gtest.h>

#include <cstdio>

#include "faisac/scenario.hpp"

using namespace faisac;

namespace {

nlohmann::json desk_json() {
  return nlohmann::json::parse(R"({
    "geometry": {"users": [[100, 260], [220, 320]], "target": [230, -140],
                 "uav_start": [0, 0], "uav_end": [420, 0], "altitude_m": 100},
    "time": {"mission_s": 45, "slots": 20, "intervals": 5},
    "arrays": {"n_tx": 12, "n_rx": 12, "segment_wavelengths": 20, "dmin_wavelengths": 0.5},
    "radio": {"wavelength_m": 0.0107, "h0_db": -60, "noise_user_dbm": -90, "noise_radar_dbm": -90,
              "pmax_dbm": 30, "rcs_m2": 1, "frame_len": 200},
    "rician": {"c1": 1, "kappa_zenith": 100},
    "objective": {"xi_c": 0.5},
    "limits": {"vmax_mps": 20}
  })");
}

std::string error_of(const nlohmann::json& j) {
  try {
    scenario_from_json(j);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Scenario, TableOneUnitsAndDerivedValues) {
  const Scenario s = scenario_from_json(desk_json());
  EXPECT_NEAR(s.slot_duration, 2.25, 1e-15);
  EXPECT_EQ(s.mu, 4);
  EXPECT_NEAR(s.h0, 1e-6, 1e-21);
  EXPECT_NEAR(s.noise_user, 1e-12, 1e-27);
  EXPECT_NEAR(s.pmax, 1.0, 1e-15);
  EXPECT_NEAR(s.segment_len, 20 * 0.0107, 1e-15);
  EXPECT_NEAR(s.d_min, 0.5 * 0.0107, 1e-15);
  EXPECT_DOUBLE_EQ(s.xi_s, 0.5);
}

TEST(Scenario, WeightsMustSumToOne) {
  auto j = desk_json();
  j["objective"]["xi_c"] = 0.6;
  j["objective"]["xi_s"] = 0.5;
  const std::string e = error_of(j);
  EXPECT_NE(e.find("xi_c + xi_s = 1"), std::string::npos) << e;
}

TEST(Scenario, SlotsMustDivideIntoIntervals) {
  auto j = desk_json();
  j["time"]["intervals"] = 7;
  const std::string e = error_of(j);
  EXPECT_NE(e.find("divisible"), std::string::npos) << e;
}

TEST(Scenario, RejectsUnknownKeysAndBadValues) {
  auto j = desk_json();
  j["radio"]["gain_db"] = 3;
  EXPECT_NE(error_of(j).find("unknown key"), std::string::npos);
  j = desk_json();
  j["geometry"]["altitude_m"] = -5;
  EXPECT_NE(error_of(j).find("altitude"), std::string::npos);
  j = desk_json();
  j["arrays"]["n_tx"] = 50;
  EXPECT_NE(error_of(j).find("n_tx"), std::string::npos);
  j = desk_json();
  j["geometry"]["uav_end"] = {5000, 0};
  EXPECT_NE(error_of(j).find("reachable"), std::string::npos);
}

TEST(Scenario, RoundTripIsIdentical) {
  auto j = desk_json();
  j["objective"]["xi_c"] = 0.3;
  j["radio"]["pmax_dbm"] = 27.3;
  const Scenario a = scenario_from_json(j);
  const Scenario b = scenario_from_json(scenario_to_json(a));
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.pmax, b.pmax);
  const std::string path = ::testing::TempDir() + "faisac_roundtrip.json";
  save_scenario(a, path);
  EXPECT_TRUE(load_scenario(path) == a);
  std::remove(path.c_str());
}

TEST(Scenario, IntervalOf) {
  auto j = desk_json();
  j["time"]["slots"] = 20;
  j["time"]["intervals"] = 5;
  const Scenario s = scenario_from_json(j);
  EXPECT_EQ(s.interval_of(1), 1);
  EXPECT_EQ(s.interval_of(4), 1);
  EXPECT_EQ(s.interval_of(5), 2);
  EXPECT_EQ(s.interval_of(20), 5);
  EXPECT_THROW(s.interval_of(0), std::out_of_range);
  EXPECT_THROW(s.interval_of(21), std::out_of_range);
  std::vector<int> count(s.intervals + 1, 0);
  int prev = 1;
  for (int n = 1; n <= s.slots; ++n) {
    const int i = s.interval_of(n);
    EXPECT_GE(i, prev);
    prev = i;
    ++count[i];
  }
  for (int i = 1; i <= s.intervals; ++i) EXPECT_EQ(count[i], s.mu);
}

TEST(Scenario, UniformLayoutAndTrajectory) {
  const Scenario s = scenario_from_json(desk_json());
  const ArrayLayout l = uniform_layout(s.n_tx, s.segment_len, s.d_min, ArrayKind::transmit);
  EXPECT_TRUE(layout_feasible(l, s.d_min, s.segment_len));
  EXPECT_DOUBLE_EQ(l.coords[0], 0.0);
  EXPECT_NEAR(l.coords[s.n_tx - 1], s.segment_len, 1e-15);
  ArrayLayout bad = l;
  bad.coords[1] = bad.coords[0] + 0.1 * s.d_min;
  EXPECT_FALSE(layout_feasible(bad, s.d_min, s.segment_len));
  const Trajectory t = straight_line(s);
  EXPECT_TRUE(trajectory_feasible(s, t));
}
