#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "faisac/ao.hpp"

using namespace faisac;

namespace {

Scenario desk() { return load_scenario(std::string(FAISAC_SCENARIO_DIR) + "/desk.json"); }

Scenario desk_with(double xi_c) {
  nlohmann::json j = scenario_to_json(desk());
  j["objective"]["xi_c"] = xi_c;
  return scenario_from_json(j);
}

double total_crb(const ObjectiveBreakdown& o) {
  double t = 0.0;
  for (double v : o.inv_crb) t += 1.0 / v;
  return t;
}

}  // namespace

TEST(Ao, InitialStateIsFeasible) {
  const Scenario s = desk();
  const AoState st = initialize(s);
  EXPECT_TRUE(trajectory_feasible(s, st.trajectory));
  ASSERT_EQ(static_cast<int>(st.tx.size()), s.intervals);
  ASSERT_EQ(static_cast<int>(st.bf.size()), s.slots);
  for (int i = 0; i < s.intervals; ++i) {
    EXPECT_TRUE(layout_feasible(st.tx[i], s.d_min, s.segment_len));
    EXPECT_TRUE(layout_feasible(st.rx[i], s.d_min, s.segment_len));
  }
  for (const BeamformingSolution& b : st.bf) {
    EXPECT_NEAR(tx_covariance(b).trace().real(), s.pmax, 1e-12 * s.pmax);
    EXPECT_EQ(b.r0.norm(), 0.0);
  }
  EXPECT_TRUE(std::isfinite(st.initial_weighted));
  EXPECT_GT(st.initial_weighted, 0.0);
}

TEST(Ao, TwoTransmitAntennasSpanTheSegment) {
  nlohmann::json j = scenario_to_json(desk());
  j["arrays"]["n_tx"] = 2;
  const Scenario s = scenario_from_json(j);
  const AoState st = initialize(s);
  EXPECT_DOUBLE_EQ(st.tx[0].coords[0], 0.0);
  EXPECT_DOUBLE_EQ(st.tx[0].coords[1], s.segment_len);
}

TEST(Ao, InfiniteToleranceStopsAfterOneIteration) {
  const Scenario s = desk();
  AoOptions opt;
  opt.eps = std::numeric_limits<double>::infinity();
  const AoState st = run_proposed(s, opt);
  EXPECT_EQ(st.iteration, 1);
  EXPECT_EQ(st.trace.size(), 1u);
  EXPECT_TRUE(st.converged);
  EXPECT_TRUE(trajectory_feasible(s, st.trajectory));
  for (int i = 0; i < s.intervals; ++i) EXPECT_TRUE(layout_feasible(st.tx[i], s.d_min, s.segment_len));
}

TEST(Ao, TraceIsMonotoneAndBounded) {
  const Scenario s = desk();
  AoOptions opt;
  opt.max_outer = 10;
  const AoState st = run_proposed(s, opt);
  ASSERT_EQ(st.trace.size(), 10u);
  const double ub = objective_upper_bound(s);
  double prev = st.initial_weighted;
  for (const IterationRecord& r : st.trace) {
    EXPECT_GE(r.after_beamforming, prev - 1e-6) << "iteration " << r.iteration;
    EXPECT_GE(r.after_tx, r.after_beamforming - 1e-6) << "iteration " << r.iteration;
    EXPECT_GE(r.after_rx, r.after_tx - 1e-6) << "iteration " << r.iteration;
    EXPECT_GE(r.after_trajectory, r.after_rx - 1e-4) << "iteration " << r.iteration;
    EXPECT_LE(r.weighted, ub);
    EXPECT_EQ(r.solver_warnings, 0) << "iteration " << r.iteration;
    prev = r.weighted;
  }
  EXPECT_GT(st.trace.back().weighted, st.initial_weighted);
  const ObjectiveBreakdown o = evaluate_objective(s, st.trajectory, st.tx, st.rx, st.bf);
  EXPECT_DOUBLE_EQ(o.weighted, st.trace.back().weighted);
  EXPECT_NEAR(o.weighted, s.xi_c * o.sum_rate + s.xi_s * s.inv_crb_scale * o.total_inv_crb, 1e-12 * o.weighted);
}

TEST(Ao, CommunicationWeightTradesRateForCrb) {
  AoOptions opt;
  opt.max_outer = 12;
  const Scenario comm = desk_with(1.0);
  const Scenario sense = desk_with(0.0);
  const AoState a = run_proposed(comm, opt);
  const AoState b = run_proposed(sense, opt);
  const ObjectiveBreakdown oa = evaluate_objective(comm, a.trajectory, a.tx, a.rx, a.bf);
  const ObjectiveBreakdown ob = evaluate_objective(sense, b.trajectory, b.tx, b.rx, b.bf);
  EXPECT_GT(oa.sum_rate, ob.sum_rate);
  EXPECT_LT(total_crb(ob), total_crb(oa));
}

TEST(Ao, RepeatedRunsAreBitIdentical) {
  const Scenario s = desk();
  AoOptions opt;
  opt.max_outer = 3;
  opt.seed = 11;
  const AoState a = run_proposed(s, opt);
  const AoState b = run_proposed(s, opt);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t k = 0; k < a.trace.size(); ++k) {
    EXPECT_EQ(std::memcmp(&a.trace[k].weighted, &b.trace[k].weighted, sizeof(double)), 0);
    EXPECT_EQ(std::memcmp(&a.trace[k].after_tx, &b.trace[k].after_tx, sizeof(double)), 0);
  }
  for (int n = 0; n < s.slots; ++n) {
    EXPECT_EQ(a.trajectory.points[n], b.trajectory.points[n]);
    EXPECT_EQ(a.bf[n].w_mats, b.bf[n].w_mats);
  }
}
