#include <gtest/gtest.h>

#include <random>

#include "faisac/metrics.hpp"

using namespace faisac;

namespace {

Scenario desk() {
  ScenarioConfig c;
  c.users = {{100.0, 260.0}, {220.0, 320.0}, {330.0, 240.0}};
  c.target = {230.0, -140.0};
  c.uav_end = {420.0, 0.0};
  c.slots = 10;
  c.n_tx = 4;
  c.n_rx = 4;
  return Scenario::from_config(c);
}

Eigen::MatrixXcd random_psd(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cd(g(rng), g(rng));
  return scale * a * a.adjoint();
}

ArrayLayout random_layout(int n, double d_fa, double d_min, ArrayKind kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, d_fa - (n - 1) * d_min);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  std::sort(v.begin(), v.end());
  ArrayLayout l;
  l.kind = kind;
  l.coords.resize(n);
  for (int k = 0; k < n; ++k) l.coords[k] = v[k] + k * d_min;
  return l;
}

BeamformingSolution random_solution(int n, int m, std::mt19937_64& rng) {
  BeamformingSolution b;
  for (int k = 0; k < m; ++k) b.w_mats.push_back(random_psd(n, rng, 0.05));
  b.r0 = random_psd(n, rng, 0.05);
  return b;
}

}  // namespace

TEST(Metrics, TxCovariance) {
  BeamformingSolution b = zero_beamforming(3, 1);
  b.w_mats[0](0, 0) = 2.5;
  const Eigen::MatrixXcd r = tx_covariance(b);
  EXPECT_EQ(r(0, 0), cd(2.5, 0));
  EXPECT_EQ(r.cwiseAbs().sum(), 2.5);
  EXPECT_EQ(tx_covariance(zero_beamforming(3, 2)).cwiseAbs().sum(), 0.0);
  std::mt19937_64 rng(3);
  const BeamformingSolution c = random_solution(4, 3, rng);
  double expect = c.r0.trace().real();
  for (const auto& w : c.w_mats) expect += w.trace().real();
  EXPECT_NEAR(tx_covariance(c).trace().real(), expect, 1e-12 * expect);
}

TEST(Metrics, ApproxRateClosedCases) {
  const Scenario s = desk();
  const ArrayLayout tx = uniform_layout(4, s.segment_len, s.d_min, ArrayKind::transmit);
  ChannelStats c = channel_stats(s, {50.0, 50.0}, s.users[0], tx);
  EXPECT_EQ(approx_rate(c, zero_beamforming(4, 1), 0, s.noise_user), 0.0);
  c.zeta_nlos = 0.0;
  BeamformingSolution b = zero_beamforming(4, 1);
  b.w_mats[0] = s.pmax * c.h_bar * c.h_bar.adjoint() / 4.0;
  EXPECT_NEAR(approx_rate(c, b, 0, s.noise_user), std::log2(1.0 + c.zeta_los * s.pmax * 4.0 / s.noise_user), 1e-10);
}

TEST(Metrics, ApproxRateMonotoneInSignal) {
  const Scenario s = desk();
  std::mt19937_64 rng(5);
  const ArrayLayout tx = uniform_layout(4, s.segment_len, s.d_min, ArrayKind::transmit);
  const ChannelStats c = channel_stats(s, {120.0, 40.0}, s.users[1], tx);
  BeamformingSolution b = random_solution(4, 3, rng);
  double prev = approx_rate(c, b, 1, s.noise_user);
  for (int k = 0; k < 5; ++k) {
    b.w_mats[1] += random_psd(4, rng, 0.01);
    const double r = approx_rate(c, b, 1, s.noise_user);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(Metrics, CrbClosedFormCases) {
  const Scenario s = desk();
  std::mt19937_64 rng(9);
  const ArrayLayout tx = uniform_layout(4, s.segment_len, s.d_min, ArrayKind::transmit);
  ArrayLayout rx2{Eigen::Vector2d(0.0, s.segment_len), ArrayKind::receive};
  EXPECT_NEAR(total_sum_of_squares(rx2.coords), s.segment_len * s.segment_len / 2.0, 1e-18);
  const BeamformingSolution b = random_solution(4, 3, rng);
  EXPECT_EQ(inv_crb_closed(s, tx, rx2, M_PI / 2, 100.0, b), 0.0);
  ArrayLayout flat{Eigen::Vector2d(0.01, 0.01), ArrayKind::receive};
  EXPECT_THROW(inv_crb_closed(s, tx, flat, 0.5, 100.0, b), DegenerateArrayError);
  // Shift invariance of the centered quadratic.
  const ArrayLayout rx = uniform_layout(4, s.segment_len, s.d_min, ArrayKind::receive);
  ArrayLayout shifted = rx;
  shifted.coords.array() += 0.37;
  EXPECT_NEAR(inv_crb_closed(s, tx, shifted, 0.6, 150.0, b) / inv_crb_closed(s, tx, rx, 0.6, 150.0, b), 1.0, 1e-12);
}

TEST(Metrics, CrbTraceFormMatchesClosedFormForRankOneCovariance) {
  const Scenario s = desk();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ang(0.05, 1.5);
  std::uniform_real_distribution<double> dist(100.0, 600.0);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    const ArrayLayout tx = random_layout(4, s.segment_len, s.d_min, ArrayKind::transmit, rng);
    const ArrayLayout rx = random_layout(4, s.segment_len, s.d_min, ArrayKind::receive, rng);
    Eigen::VectorXcd w(4);
    for (int k = 0; k < 4; ++k) w[k] = cd(g(rng), g(rng));
    BeamformingSolution b = zero_beamforming(4, 1);
    b.w_mats[0] = w * w.adjoint() / w.squaredNorm();
    const double th = ang(rng);
    const double d = dist(rng);
    const double prod = crb_trace_form(s, tx, rx, th, d, b) * inv_crb_closed(s, tx, rx, th, d, b);
    EXPECT_NEAR(prod, 1.0, 1e-8) << "trial " << trial;
  }
}

// For a general covariance the Fisher information carries an extra transmit-derivative term
// N_r (da^H R da - |a^H R da|^2 / a^H R a) >= 0, so the closed form upper-bounds the CRB.
TEST(Metrics, CrbTraceFormGapIsTransmitDerivativeTerm) {
  const Scenario s = desk();
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> ang(0.05, 1.5);
  std::uniform_real_distribution<double> dist(100.0, 600.0);
  for (int trial = 0; trial < 100; ++trial) {
    const ArrayLayout tx = random_layout(4, s.segment_len, s.d_min, ArrayKind::transmit, rng);
    const ArrayLayout rx = random_layout(4, s.segment_len, s.d_min, ArrayKind::receive, rng);
    const BeamformingSolution b = random_solution(4, 3, rng);
    const double th = ang(rng);
    const double d = dist(rng);
    const Eigen::MatrixXcd r = tx_covariance(b);
    const Eigen::VectorXcd a = steering_vector(tx.coords, th, s.wavelength);
    const double k = 2.0 * M_PI / s.wavelength * std::cos(th);
    Eigen::VectorXcd da(4);
    for (int i = 0; i < 4; ++i) da[i] = cd(0.0, k * tx.coords[i]) * a[i];
    const double ara = a.dot(r * a).real();
    const double extra = 4.0 * (da.dot(r * da).real() - std::norm(a.dot(r * da)) / ara);
    const double closed_info = ara * k * k * total_sum_of_squares(rx.coords);
    const double ratio = crb_trace_form(s, tx, rx, th, d, b) * inv_crb_closed(s, tx, rx, th, d, b);
    EXPECT_LE(ratio, 1.0 + 1e-12);
    EXPECT_NEAR(ratio, closed_info / (closed_info + extra), 1e-9) << "trial " << trial;
  }
}

TEST(Metrics, CrbTraceFormScaling) {
  const Scenario s = desk();
  std::mt19937_64 rng(19);
  const ArrayLayout tx = uniform_layout(4, s.segment_len, s.d_min, ArrayKind::transmit);
  const ArrayLayout rx = uniform_layout(4, s.segment_len, s.d_min, ArrayKind::receive);
  BeamformingSolution b = random_solution(4, 2, rng);
  const double base = crb_trace_form(s, tx, rx, 0.7, 200.0, b);
  EXPECT_NEAR(crb_trace_form(s, tx, rx, 0.7, 400.0, b) / base, 4.0, 1e-10);
  for (auto& w : b.w_mats) w *= 2.0;
  b.r0 *= 2.0;
  EXPECT_NEAR(crb_trace_form(s, tx, rx, 0.7, 200.0, b) / base, 0.5, 1e-10);
}

TEST(Metrics, BeampatternGain) {
  const Scenario s = desk();
  std::mt19937_64 rng(21);
  const ArrayLayout tx = random_layout(4, s.segment_len, s.d_min, ArrayKind::transmit, rng);
  BeamformingSolution iso = zero_beamforming(4, 1);
  iso.r0 = Eigen::MatrixXcd::Identity(4, 4);
  EXPECT_NEAR(beampattern_gain(s, tx, iso, {0, 0}, {120, 80}), 4.0, 1e-12);
  const Vec2 uav(10, 10), pt(200, 40);
  const Eigen::VectorXcd a0 = tx_steering(tx, elevation_angle(uav, pt, s.altitude), s.wavelength);
  BeamformingSolution dir = zero_beamforming(4, 1);
  dir.w_mats[0] = a0 * a0.adjoint();
  EXPECT_NEAR(beampattern_gain(s, tx, dir, uav, pt), 16.0, 1e-11);
  std::uniform_real_distribution<double> u(-300, 300);
  for (int k = 0; k < 200; ++k) {
    const BeamformingSolution b = random_solution(4, 3, rng);
    EXPECT_GE(beampattern_gain(s, tx, b, {u(rng), u(rng)}, {u(rng), u(rng)}), 0.0);
  }
}

TEST(Metrics, WeightedObjectiveBreakdown) {
  const Scenario s = desk();
  std::mt19937_64 rng(4);
  const Trajectory t = straight_line(s);
  std::vector<ArrayLayout> tx(s.intervals, uniform_layout(4, s.segment_len, s.d_min, ArrayKind::transmit));
  std::vector<ArrayLayout> rx(s.intervals, uniform_layout(4, s.segment_len, s.d_min, ArrayKind::receive));
  std::vector<BeamformingSolution> bf;
  for (int n = 0; n < s.slots; ++n) bf.push_back(random_solution(4, 3, rng));
  const ObjectiveBreakdown o = evaluate_objective(s, t, tx, rx, bf);
  double rates = 0.0, inv = 0.0;
  for (int n = 0; n < s.slots; ++n) {
    rates += o.slot_sum_rate(n);
    inv += o.inv_crb[n];
    const SlotGeometry g = slot_geometry(s, t.points[n], tx[0], rx[0]);
    EXPECT_NEAR(o.inv_crb[n], inv_crb_closed(s, tx[0], rx[0], g.theta_t, g.dist_t, bf[n]), 1e-9 * o.inv_crb[n]);
  }
  EXPECT_NEAR(o.weighted, s.xi_c * rates + s.xi_s * s.inv_crb_scale * inv, 1e-12 * std::abs(o.weighted));
}
