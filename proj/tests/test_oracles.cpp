#include <gtest/gtest.h>

#include "faisac/oracles.hpp"

using namespace faisac;

namespace {

Scenario desk() { return load_scenario(std::string(FAISAC_SCENARIO_DIR) + "/desk.json"); }

struct Instance {
  ArrayLayout tx, rx;
  BeamformingSolution b;
  double theta, dist;
};

Instance random_instance(const Scenario& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(0.1, 1.45), dist(120.0, 600.0);
  Instance in;
  in.tx.kind = ArrayKind::transmit;
  in.tx.coords = oracle::detail::random_positions(s.n_tx, s.d_min, s.segment_len, rng);
  in.rx.kind = ArrayKind::receive;
  in.rx.coords = oracle::detail::random_positions(s.n_rx, s.d_min, s.segment_len, rng);
  in.b = oracle::detail::random_beams(s.n_tx, s.num_users(), s.pmax, rng);
  in.theta = ang(rng);
  in.dist = dist(rng);
  return in;
}

}  // namespace

TEST(Oracles, PureLineOfSightRateHasNoVariance) {
  const Scenario s = desk();
  const ArrayLayout tx = uniform_layout(s.n_tx, s.segment_len, s.d_min, ArrayKind::transmit);
  ChannelStats c = channel_stats(s, Vec2(50.0, 10.0), s.users[0], tx);
  c.kappa = std::numeric_limits<double>::infinity();
  c.zeta_los = c.beta;
  c.zeta_nlos = 0.0;
  std::mt19937_64 rng(1);
  const BeamformingSolution b = oracle::detail::random_beams(s.n_tx, s.num_users(), s.pmax, rng);
  const oracle::McEstimate e = oracle::mc_ergodic_rate(c, b, 0, s.noise_user, 1000, 3);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_NEAR(e.mean, approx_rate(c, b, 0, s.noise_user), 1e-12);
}

TEST(Oracles, StandardErrorShrinksWithSamples) {
  const Scenario s = desk();
  const ArrayLayout tx = uniform_layout(s.n_tx, s.segment_len, s.d_min, ArrayKind::transmit);
  const ChannelStats c = channel_stats(s, Vec2(60.0, 0.0), s.users[1], tx);
  std::mt19937_64 rng(2);
  const BeamformingSolution b = oracle::detail::random_beams(s.n_tx, s.num_users(), s.pmax, rng);
  const double se1 = oracle::mc_ergodic_rate(c, b, 1, s.noise_user, 20000, 5).std_error;
  const double se2 = oracle::mc_ergodic_rate(c, b, 1, s.noise_user, 40000, 6).std_error;
  EXPECT_NEAR(se2 / se1, 1.0 / std::sqrt(2.0), 0.05);
}

TEST(Oracles, ApproximateRateTracksMonteCarlo) {
  const Scenario s = desk();
  const ArrayLayout tx = uniform_layout(s.n_tx, s.segment_len, s.d_min, ArrayKind::transmit);
  const ChannelStats c = channel_stats(s, Vec2(200.0, 100.0), s.users[1], tx);
  BeamformingSolution b = zero_beamforming(s.n_tx, s.num_users());
  b.w_mats[1] = c.h_bar * c.h_bar.adjoint() * (s.pmax / s.n_tx);
  const oracle::McEstimate e = oracle::mc_ergodic_rate(c, b, 1, s.noise_user, 100000, 7);
  EXPECT_NEAR(approx_rate(c, b, 1, s.noise_user), e.mean, 0.1 * e.mean);
}

TEST(Oracles, FiniteDifferenceCrbMatchesAnalyticForms) {
  const Scenario s = desk();
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const Instance in = random_instance(s, rng);
    const double analytic = crb_trace_form(s, in.tx, in.rx, in.theta, in.dist, in.b);
    const oracle::FdCrb fd = oracle::fim_numeric_crb(s, in.tx, in.rx, in.theta, in.dist, in.b, 1e-6);
    EXPECT_NEAR(fd.crb / analytic, 1.0, 1e-5);
  }
}

// The closed form drops a transmit-derivative term that vanishes for a rank-one covariance.
TEST(Oracles, FiniteDifferenceCrbMatchesClosedFormForRankOneCovariance) {
  const Scenario s = desk();
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    Instance in = random_instance(s, rng);
    const Eigen::MatrixXcd w = oracle::detail::random_psd(s.n_tx, 1, rng);
    in.b = zero_beamforming(s.n_tx, 1);
    in.b.w_mats[0] = w * (s.pmax / w.trace().real());
    const oracle::FdCrb fd = oracle::fim_numeric_crb(s, in.tx, in.rx, in.theta, in.dist, in.b, 1e-6);
    EXPECT_NEAR(fd.crb * inv_crb_closed(s, in.tx, in.rx, in.theta, in.dist, in.b), 1.0, 1e-5);
  }
}

TEST(Oracles, FiniteDifferenceErrorIsSecondOrder) {
  const Scenario s = desk();
  std::mt19937_64 rng(5);
  const Instance in = random_instance(s, rng);
  const double analytic = crb_trace_form(s, in.tx, in.rx, in.theta, in.dist, in.b);
  const double e1 = std::abs(oracle::fim_numeric_crb(s, in.tx, in.rx, in.theta, in.dist, in.b, 2e-4).crb - analytic);
  const double e2 = std::abs(oracle::fim_numeric_crb(s, in.tx, in.rx, in.theta, in.dist, in.b, 1e-4).crb - analytic);
  EXPECT_NEAR(e1 / e2, 4.0, 0.4);
}

TEST(Oracles, SurrogateFamiliesHoldAndTouch) {
  const oracle::BoundReport r = oracle::surrogate_bound_sweep(desk(), 1000, 11);
  ASSERT_EQ(r.families.size(), 6u);
  for (const oracle::BoundFamily& f : r.families) {
    EXPECT_GE(f.trials, 500) << f.name;
    EXPECT_EQ(f.violations, 0) << f.name << " worst " << f.worst_violation;
    EXPECT_LE(f.worst_tangency, 1e-9) << f.name;
  }
}

TEST(Oracles, CurvatureSignsFollowTheBoundDirection) {
  const oracle::SignReport r = oracle::sign_structure_sweep(1000, 12);
  EXPECT_EQ(r.trials, 2000);
  EXPECT_EQ(r.failures, 0) << "worst " << r.worst;
}
