#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "faisac/beamforming.hpp"

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

SlotGeometry geometry_at(const Scenario& s, const Vec2& q) {
  const ArrayLayout tx = uniform_layout(s.n_tx, s.segment_len, s.d_min, ArrayKind::transmit);
  const ArrayLayout rx = uniform_layout(s.n_rx, s.segment_len, s.d_min, ArrayKind::receive);
  return slot_geometry(s, q, tx, rx);
}

}  // namespace

TEST(Beamforming, FpUpdateCases) {
  FpPair p = fp_update(2.0, 2.0);
  EXPECT_DOUBLE_EQ(p.omega, 1.0);
  EXPECT_NEAR(p.varpi, 1.0 / std::sqrt(4.0), 1e-15);
  p = fp_update(3.0, 1.0);
  EXPECT_DOUBLE_EQ(p.omega, 3.0);
  EXPECT_NEAR(p.varpi, std::sqrt(3.0) / 2.0, 1e-15);
  p = fp_update(0.0, 1.0);
  EXPECT_EQ(p.omega, 0.0);
  EXPECT_EQ(p.varpi, 0.0);
}

// With optimal auxiliaries the quadratic transform reproduces log2(1 + e/f), and it never exceeds it.
TEST(Beamforming, FpTransformIsTightLowerBound) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 50.0);
  for (int k = 0; k < 200; ++k) {
    const double e = u(rng), f = u(rng);
    const double exact = std::log2(1.0 + e / f);
    EXPECT_NEAR(fp_rate_surrogate(fp_update(e, f), e, f), exact, 1e-12 * std::max(1.0, exact));
    const double e2 = u(rng), f2 = u(rng);
    EXPECT_LE(fp_rate_surrogate(fp_update(e, f), e2, f2), std::log2(1.0 + e2 / f2) + 1e-12);
  }
}

TEST(Beamforming, ZeroBudgetGivesZeroDesign) {
  Scenario s = Scenario::from_config(desk_config());
  s.pmax = 0.0;
  const SlotResult r = optimize_slot(s, geometry_at(s, {50.0, 0.0}), zero_beamforming(4, 3));
  EXPECT_EQ(r.solution.total_power(), 0.0);
  for (const auto& w : r.solution.w_vecs) EXPECT_EQ(w.norm(), 0.0);
}

// Single user, pure line of sight, no sensing weight: the optimum is maximum-ratio transmission.
TEST(Beamforming, SingleUserLosConvergesToMrt) {
  ScenarioConfig c = desk_config();
  c.users = {{150.0, 220.0}};
  c.xi_c = 1.0;
  c.xi_s = 0.0;
  const Scenario s = Scenario::from_config(c);
  SlotGeometry g = geometry_at(s, {60.0, 20.0});
  g.users[0].zeta_nlos = 0.0;
  BeamformingOptions opt;
  opt.inner_rounds = 60;
  const SlotResult r = optimize_slot(s, g, isotropic_beamforming(s), opt);
  const Eigen::VectorXcd& h = g.users[0].h_bar;
  const Eigen::MatrixXcd mrt = s.pmax * h * h.adjoint() / static_cast<double>(s.n_tx);
  EXPECT_LE((r.solution.w_mats[0] - mrt).norm() / mrt.norm(), 1e-3);
  const double best = std::log2(1.0 + g.users[0].zeta_los * s.pmax * s.n_tx / s.noise_user);
  EXPECT_NEAR(approx_rate(g.users[0], r.solution, 0, s.noise_user), best, 1e-5 * best);
  EXPECT_GE(r.solution.rank_one_ratio[0], kRankOneThreshold);
}

// Communication weight zero: all power goes along the target steering direction.
TEST(Beamforming, SensingOnlyConcentratesOnTarget) {
  ScenarioConfig c = desk_config();
  c.xi_c = 0.0;
  c.xi_s = 1.0;
  const Scenario s = Scenario::from_config(c);
  const SlotGeometry g = geometry_at(s, {120.0, 10.0});
  const SlotResult r = optimize_slot(s, g, isotropic_beamforming(s));
  ASSERT_EQ(r.report.status, convex::SolverStatus::optimal) << r.report.message;
  const double ara = quad_form(g.a_t, tx_covariance(r.solution));
  EXPECT_NEAR(ara / (s.pmax * s.n_tx), 1.0, 1e-6);
  EXPECT_LE(r.solution.total_power(), s.pmax * (1.0 + 1e-8));
}

TEST(Beamforming, RankOneExtraction) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::VectorXcd v(4);
  for (int k = 0; k < 4; ++k) v[k] = cd(g(rng), g(rng));
  const RankOne r = extract_rank_one(v * v.adjoint());
  EXPECT_NEAR(r.ratio, 1.0, 1e-12);
  const cd phase = r.w.dot(v) / std::abs(r.w.dot(v));
  EXPECT_LE((r.w * phase - v).norm(), 1e-10 * v.norm());
  EXPECT_NEAR(extract_rank_one(Eigen::MatrixXcd::Identity(4, 4)).ratio, 0.25, 1e-12);
}

TEST(Beamforming, FallbackOnSpreadCovariance) {
  const Scenario s = Scenario::from_config(desk_config());
  const SlotGeometry g = geometry_at(s, {80.0, 30.0});
  BeamformingSolution b = isotropic_beamforming(s);
  const Eigen::VectorXcd w = randomize_rank_one(s, g, b, 1, 42);
  EXPECT_NEAR(w.squaredNorm(), b.w_mats[1].trace().real(), 1e-12 * s.pmax);
  EXPECT_EQ(w, randomize_rank_one(s, g, b, 1, 42));
  // The kept candidate is at least as good as the plain dominant direction.
  BeamformingSolution dom = b;
  Eigen::VectorXcd d = extract_rank_one(b.w_mats[1]).w;
  d *= std::sqrt(b.w_mats[1].trace().real()) / d.norm();
  dom.w_mats[1] = d * d.adjoint();
  BeamformingSolution kept = b;
  kept.w_mats[1] = w * w.adjoint();
  EXPECT_GE(slot_metrics(s, g, kept).weighted, slot_metrics(s, g, dom).weighted);
}

TEST(Beamforming, FpRoundAscendsAndStaysWithinBudget) {
  const Scenario s = Scenario::from_config(desk_config());
  const Trajectory t = straight_line(s);
  for (int n = 0; n < s.slots; ++n) {
    const SlotGeometry g = geometry_at(s, t.points[n]);
    BeamformingSolution b = isotropic_beamforming(s);
    double prev_rate_obj = slot_metrics(s, g, b).weighted;
    for (int round = 0; round < 4; ++round) {
      const std::vector<FpPair> fp = slot_fp(s, g, b);
      const SlotResult r = optimize_slot(s, g, b);
      ASSERT_EQ(r.report.status, convex::SolverStatus::optimal) << r.report.message;
      EXPECT_GE(slot_surrogate(s, g, r.solution, fp), slot_surrogate(s, g, b, fp) - 1e-9);
      EXPECT_LE(r.solution.total_power(), s.pmax + 1e-8);
      const double now = slot_metrics(s, g, r.solution).weighted;
      EXPECT_GE(now, prev_rate_obj - 1e-6 * std::abs(prev_rate_obj));
      prev_rate_obj = now;
      b = r.solution;
    }
    // Re-optimized auxiliaries make the surrogate exact.
    const std::vector<FpPair> fp = slot_fp(s, g, b);
    EXPECT_NEAR(slot_surrogate(s, g, b, fp), slot_metrics(s, g, b).weighted, 1e-6);
  }
}
