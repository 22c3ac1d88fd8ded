#include <gtest/gtest.h>

#include <random>

#include "faisac/beamforming.hpp"
#include "faisac/rxarray.hpp"
#include "faisac/trajectory.hpp"

using namespace faisac;

namespace {

ScenarioConfig desk_config() {
  ScenarioConfig c;
  c.users = {{100.0, 260.0}, {220.0, 320.0}, {330.0, 240.0}};
  c.target = {230.0, -140.0};
  c.uav_end = {420.0, 0.0};
  c.slots = 10;
  c.n_tx = 4;
  c.n_rx = 4;
  return c;
}

struct Desk {
  Scenario s;
  Trajectory t;
  std::vector<ArrayLayout> tx, rx;
  std::vector<BeamformingSolution> bf;
};

Desk desk(const ScenarioConfig& c) {
  Desk d{Scenario::from_config(c), {}, {}, {}, {}};
  d.t = straight_line(d.s);
  d.tx.assign(d.s.intervals, uniform_layout(d.s.n_tx, d.s.segment_len, d.s.d_min, ArrayKind::transmit));
  d.rx.assign(d.s.intervals, optimal_rx_positions(d.s.n_rx, d.s.d_min, d.s.segment_len));
  for (int n = 0; n < d.s.slots; ++n) {
    const SlotGeometry g = slot_geometry(d.s, d.t.points[n], d.tx[d.s.interval_index(n)], d.rx[d.s.interval_index(n)]);
    d.bf.push_back(optimize_slot(d.s, g, isotropic_beamforming(d.s)).solution);
  }
  return d;
}

}  // namespace

TEST(Trajectory, ZeroBeamformingGivesZeroConstants) {
  Desk d = desk(desk_config());
  const std::vector<BeamformingSolution> zero(d.s.slots, zero_beamforming(d.s.n_tx, d.s.num_users()));
  const TrajectoryLinearization lin = linearize(d.s, d.t, d.tx, d.rx, zero);
  for (const auto& sl : lin.slots) {
    for (int m = 0; m < d.s.num_users(); ++m) {
      EXPECT_EQ(sl.b_coef[m], 0.0);
      EXPECT_EQ(sl.c_coef[m], 0.0);
    }
    EXPECT_EQ(sl.a_coef, 0.0);
  }
  EXPECT_EQ(trajectory_surrogate(d.s, lin, d.t), 0.0);
}

TEST(Trajectory, SingleUserWithoutSensingCovarianceHasNoInterference) {
  ScenarioConfig c = desk_config();
  c.users = {{150.0, 200.0}};
  Desk d = desk(c);
  for (auto& b : d.bf) b.r0.setZero();
  const TrajectoryLinearization lin = linearize(d.s, d.t, d.tx, d.rx, d.bf);
  for (const auto& sl : lin.slots) EXPECT_EQ(sl.c_coef[0], 0.0);
  const P51 p = build_p51(d.s, lin);
  EXPECT_EQ(p.n_eta, 0);
}

TEST(Trajectory, FreezingIsExactAtExpansionPoint) {
  const Desk d = desk(desk_config());
  const TrajectoryLinearization lin = linearize(d.s, d.t, d.tx, d.rx, d.bf);
  const double exact = exact_objective(d.s, d.t, d.tx, d.rx, d.bf);
  EXPECT_NEAR(frozen_objective(d.s, lin, d.t), exact, 1e-9 * std::abs(exact));
  EXPECT_NEAR(trajectory_surrogate(d.s, lin, d.t), exact, 1e-9 * std::abs(exact));
}

// The program evaluated at the expansion point (tight epigraphs, eta = -ln d^2) reproduces the objective.
TEST(Trajectory, ProgramTangency) {
  const Desk d = desk(desk_config());
  const TrajectoryLinearization lin = linearize(d.s, d.t, d.tx, d.rx, d.bf);
  const P51 p = build_p51(d.s, lin);
  const convex::ConicProgram& prog = p.program;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(prog.num_variables());
  const double h = d.s.altitude;
  for (int n = 1; n + 1 < d.s.slots; ++n) {
    const int i = prog.index(p.q_blocks[n], 0);
    z[i] = d.t.points[n].x() / h;
    z[i + 1] = d.t.points[n].y() / h;
  }
  for (int k = 0; k < static_cast<int>(prog.blocks().size()); ++k) {
    const std::string& name = prog.block(k).name;
    const int i = prog.index(k);
    const int slot = std::stoi(name.substr(name.find("slot ") + 5)) - 1;
    const Vec2 q = d.t.points[slot];
    if (name.rfind("d2 target", 0) == 0) {
      z[i] = squared_distance(d.s, q, d.s.target) / (h * h);
    } else if (name.rfind("d2 ", 0) == 0 || name.rfind("eta ", 0) == 0) {
      const int m = std::stoi(name.substr(name.find("user ") + 5)) - 1;
      const double d2 = squared_distance(d.s, q, d.s.users[m]) / (h * h);
      z[i] = name[0] == 'd' ? d2 : -std::log(d2);
    }
  }
  const double exact = exact_objective(d.s, d.t, d.tx, d.rx, d.bf);
  EXPECT_NEAR(prog.objective_value(z), exact, 1e-9 * std::abs(exact));
  EXPECT_LE(prog.max_violation(z), 1e-9);
}

// Random trajectories near the expansion point: surrogate <= frozen objective.
TEST(Trajectory, SurrogateIsALowerBound) {
  const Desk d = desk(desk_config());
  const TrajectoryLinearization lin = linearize(d.s, d.t, d.tx, d.rx, d.bf);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  int violations = 0, finite = 0;
  for (int k = 0; k < 1000; ++k) {
    Trajectory t = d.t;
    const double scale = 0.1 * d.s.max_step() * (1 + k % 5);
    for (int n = 1; n + 1 < d.s.slots; ++n) t.points[n] += scale * Vec2(g(rng), g(rng));
    const double lb = trajectory_surrogate(d.s, lin, t);
    if (!std::isfinite(lb)) continue;
    ++finite;
    const double f = frozen_objective(d.s, lin, t);
    if (lb > f + 1e-9 * std::abs(f)) ++violations;
  }
  EXPECT_GT(finite, 900);
  EXPECT_EQ(violations, 0);
}

TEST(Trajectory, StepAscendsAndStaysFeasible) {
  const Desk d = desk(desk_config());
  TrajectoryOptions opt;
  opt.exact_safeguard = false;
  const TrajectoryResult r = optimize_trajectory(d.s, d.t, d.tx, d.rx, d.bf, opt);
  ASSERT_EQ(r.report.status, convex::SolverStatus::optimal) << r.report.message;
  EXPECT_TRUE(r.accepted);
  EXPECT_TRUE(trajectory_feasible(d.s, r.trajectory, 1e-7));
  EXPECT_GE(r.frozen_after, r.frozen_before - 1e-6);
  EXPECT_GE(r.report.objective, r.frozen_before - 1e-6);
  EXPECT_LE(r.report.objective, r.frozen_after + 1e-6 * std::abs(r.frozen_after));
  EXPECT_EQ(r.trajectory.points.front(), d.s.uav_start);
  EXPECT_EQ(r.trajectory.points.back(), d.s.uav_end);
}

// Sensing only, one free slot: the surrogate is maximized by the reachable point closest to the target.
TEST(Trajectory, SensingOnlyMovesTowardsTarget) {
  ScenarioConfig c = desk_config();
  c.slots = 3;
  c.intervals = 3;
  c.xi_c = 0.0;
  c.xi_s = 1.0;
  c.target = {230.0, -600.0};  // outside the reachable lens
  const Desk d = desk(c);
  const TrajectoryLinearization lin = linearize(d.s, d.t, d.tx, d.rx, d.bf);
  const P51 p = build_p51(d.s, lin);
  const convex::Solution sol = convex::solve(p.program);
  ASSERT_EQ(sol.report.status, convex::SolverStatus::optimal) << sol.report.message;
  const Vec2 q = p51_trajectory(d.s, p, sol.z).points[1];
  // Grid over the lens reachable from both endpoints.
  const double r = d.s.max_step();
  const Vec2 mid = 0.5 * (d.s.uav_start + d.s.uav_end);
  double best = 1e300;
  Vec2 arg = mid;
  const int k = 1200;
  for (int i = 0; i <= k; ++i) {
    for (int j = 0; j <= k; ++j) {
      const Vec2 v = mid + Vec2(-r + 2 * r * i / k, -r + 2 * r * j / k);
      if ((v - d.s.uav_start).norm() > r || (v - d.s.uav_end).norm() > r) continue;
      const double dist = (v - d.s.target).squaredNorm();
      if (dist < best) {
        best = dist;
        arg = v;
      }
    }
  }
  EXPECT_LE((q - arg).norm(), 4.0 * r / k);
  EXPECT_LE((q - d.s.target).squaredNorm(), best + 1e-6 * best);
}
