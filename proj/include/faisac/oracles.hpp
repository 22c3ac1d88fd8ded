#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "faisac/channel.hpp"
#include "faisac/trajectory.hpp"
#include "faisac/txarray.hpp"

// Brute-force and Monte-Carlo cross-checks. Truth values are rebuilt from the steering and Rician
// primitives only; the metrics and optimizer modules appear solely as the thing being checked.
namespace faisac::oracle {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

// Sample mean of log2(1 + SINR_m) over h = sqrt(beta) (sqrt(K/(K+1)) h_bar + sqrt(1/(K+1)) g), g ~ CN(0, I).
inline McEstimate mc_ergodic_rate(const ChannelStats& c, const BeamformingSolution& b, int m, double noise,
                                  int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  const bool pure_los = std::isinf(c.kappa);
  const double los = pure_los ? std::sqrt(c.beta) : std::sqrt(c.beta * c.kappa / (c.kappa + 1.0));
  const double nlos = pure_los ? 0.0 : std::sqrt(c.beta / (c.kappa + 1.0));
  const int n = static_cast<int>(c.h_bar.size());
  Eigen::MatrixXcd others = b.r0;
  for (int i = 0; i < static_cast<int>(b.w_mats.size()); ++i)
    if (i != m) others += b.w_mats[i];
  double mean = 0.0, m2 = 0.0;
  Eigen::VectorXcd h(n);
  for (int k = 0; k < samples; ++k) {
    for (int e = 0; e < n; ++e) {
      const double re = g(rng), im = g(rng);
      h[e] = los * c.h_bar[e] + nlos * cd(re, im);
    }
    const double sig = std::real(h.dot(b.w_mats[m] * h));
    const double itf = std::real(h.dot(others * h));
    const double r = std::log2(1.0 + sig / (itf + noise));
    const double delta = r - mean;
    mean += delta / (k + 1);
    m2 += delta * (r - mean);
  }
  McEstimate e;
  e.samples = samples;
  e.mean = mean;
  e.std_error = samples > 1 ? std::sqrt(m2 / (samples - 1.0) / samples) : 0.0;
  return e;
}

struct FdCrb {
  double crb = 0.0;            // central difference at fd_step
  double crb_half_step = 0.0;  // central difference at fd_step / 2
  double richardson = 0.0;     // (4 crb_half - crb) / 3
};

// CRB from the Fisher form with dA/dtheta replaced by central differences of A(theta) = b(theta) a(theta)^H.
inline FdCrb fim_numeric_crb(const Scenario& s, const ArrayLayout& tx, const ArrayLayout& rx, double theta_t,
                             double dist_t, const BeamformingSolution& b, double fd_step = 1e-6) {
  auto response = [&](double th) {
    return Eigen::MatrixXcd(steering_vector(rx.coords, th, s.wavelength) *
                            steering_vector(tx.coords, th, s.wavelength).adjoint());
  };
  Eigen::MatrixXcd rx_cov = b.r0;
  for (const auto& w : b.w_mats) rx_cov += w;
  const Eigen::MatrixXcd a = response(theta_t);
  auto crb_at = [&](double h) {
    const Eigen::MatrixXcd da = (response(theta_t + h) - response(theta_t - h)) / (2.0 * h);
    const double t_dd = (da.adjoint() * da * rx_cov).trace().real();
    const cd t_da = (da.adjoint() * a * rx_cov).trace();
    const double t_aa = (a.adjoint() * a * rx_cov).trace().real();
    const double gain = s.rcs * s.rcs / (4.0 * dist_t * dist_t);
    return s.noise_radar / (2.0 * gain * s.frame_len * (t_dd - std::norm(t_da) / t_aa));
  };
  FdCrb r;
  r.crb = crb_at(fd_step);
  r.crb_half_step = crb_at(0.5 * fd_step);
  r.richardson = (4.0 * r.crb_half_step - r.crb) / 3.0;
  return r;
}

struct BoundFamily {
  std::string name;
  int trials = 0;
  int violations = 0;
  double worst_violation = 0.0;  // relative, positive when the bound is on the wrong side
  double worst_tangency = 0.0;   // relative gap at the expansion point
};

struct BoundReport {
  std::vector<BoundFamily> families;
  int violations() const {
    int v = 0;
    for (const auto& f : families) v += f.violations;
    return v;
  }
  double worst_tangency() const {
    double t = 0.0;
    for (const auto& f : families) t = std::max(t, f.worst_tangency);
    return t;
  }
};

namespace detail {

inline Eigen::MatrixXcd random_psd(int n, int rank, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXcd a(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) a(i, j) = cd(g(rng), g(rng));
  return a * a.adjoint();
}

inline Eigen::VectorXd random_positions(int n, double d_min, double d_fa, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, d_fa - (n - 1) * d_min);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  std::sort(v.begin(), v.end());
  Eigen::VectorXd x(n);
  for (int k = 0; k < n; ++k) x[k] = v[k] + k * d_min;
  return x;
}

inline BeamformingSolution random_beams(int n_tx, int users, double pmax, std::mt19937_64& rng) {
  BeamformingSolution b = zero_beamforming(n_tx, users);
  double total = 0.0;
  for (auto& w : b.w_mats) {
    w = random_psd(n_tx, 1, rng);
    total += w.trace().real();
  }
  b.r0 = random_psd(n_tx, 1 + static_cast<int>(rng() % n_tx), rng) * 0.2;
  total += b.r0.trace().real();
  for (auto& w : b.w_mats) w *= pmax / total;
  b.r0 *= pmax / total;
  return b;
}

// Feasible trajectory: every interior point moved by a random offset, then pulled back until all speed
// constraints hold.
inline Trajectory perturb(const Scenario& s, const Trajectory& t, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Trajectory p = t;
  for (int n = 1; n + 1 < s.slots; ++n) p.points[n] += radius * Vec2(u(rng), u(rng));
  for (int k = 0; k < 60 && !trajectory_feasible(s, p); ++k)
    for (int n = 1; n + 1 < s.slots; ++n) p.points[n] = t.points[n] + 0.5 * (p.points[n] - t.points[n]);
  return trajectory_feasible(s, p) ? p : t;
}

// Objective with steering vectors, Rician factors and beams held at `about`, path loss following q.
inline double frozen_truth(const Scenario& s, const Trajectory& about, const Trajectory& q,
                           const std::vector<ArrayLayout>& tx, const std::vector<ArrayLayout>& rx,
                           const std::vector<BeamformingSolution>& bf) {
  double v = 0.0;
  const double h2 = s.altitude * s.altitude;
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    const BeamformingSolution& b = bf[n];
    for (int m = 0; m < s.num_users(); ++m) {
      const Vec2& u = s.users[m];
      const double dl2 = (about.points[n] - u).squaredNorm() + h2;
      const double dq2 = (q.points[n] - u).squaredNorm() + h2;
      const double th = std::asin(s.altitude / std::sqrt(dl2));
      const double k = rician_factor(th, s.rician_c1, s.rician_c2);
      const Eigen::VectorXcd hb = steering_vector(tx[i].coords, th, s.wavelength);
      auto power = [&](const Eigen::MatrixXcd& w) {
        return (k / (k + 1.0) * std::real(hb.dot(w * hb)) + w.trace().real() / (k + 1.0)) * s.h0 / dq2;
      };
      double itf = power(b.r0) + s.noise_user;
      for (int j = 0; j < s.num_users(); ++j)
        if (j != m) itf += power(b.w_mats[j]);
      v += s.xi_c * std::log2(1.0 + power(b.w_mats[m]) / itf);
    }
    const double dtl2 = (about.points[n] - s.target).squaredNorm() + h2;
    const double dtq2 = (q.points[n] - s.target).squaredNorm() + h2;
    const double th = std::asin(s.altitude / std::sqrt(dtl2));
    const Eigen::VectorXcd a = steering_vector(tx[i].coords, th, s.wavelength);
    Eigen::MatrixXcd rx_cov = b.r0;
    for (const auto& w : b.w_mats) rx_cov += w;
    const Eigen::VectorXd y = rx[i].coords;
    const double tss = (y.array() - y.mean()).square().sum();
    const double k0 = 2.0 * M_PI / s.wavelength * std::cos(th);
    const double inv = s.rcs * s.rcs * s.frame_len * k0 * k0 * std::real(a.dot(rx_cov * a)) * tss / (2.0 * s.noise_radar * dtq2);
    v += s.xi_s * s.inv_crb_scale * inv;
  }
  return v;
}

inline void record(BoundFamily& f, double bound, double truth, double scale, bool lower) {
  ++f.trials;
  const double gap = (lower ? bound - truth : truth - bound) / scale;
  if (gap > 1e-9) ++f.violations;
  f.worst_violation = std::max(f.worst_violation, gap);
}

}  // namespace detail

// Position-surrogate families on solved-looking random beams: signal lower bound (own beam), interference
// upper bound (other beams and the sensing covariance), and sensing lower / upper bounds (full covariance).
inline std::vector<BoundFamily> tx_bound_sweep(const Scenario& s, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.05, 0.5 * M_PI - 0.05);
  std::vector<BoundFamily> fam(4);
  fam[0].name = "tx signal lower";
  fam[1].name = "tx interference upper";
  fam[2].name = "tx sensing lower";
  fam[3].name = "tx sensing upper";
  const double unit = s.wavelength;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + t % std::max(1, s.n_tx + 3);
    const BeamformingSolution b = detail::random_beams(n, std::max(2, s.num_users()), 1.0, rng);
    Eigen::MatrixXcd others = b.r0, all = b.r0;
    for (std::size_t i = 0; i < b.w_mats.size(); ++i) {
      all += b.w_mats[i];
      if (i > 0) others += b.w_mats[i];
    }
    const double th = ang(rng);
    const Eigen::VectorXd about = detail::random_positions(n, s.d_min, s.segment_len, rng) / unit;
    const Eigen::VectorXd x = detail::random_positions(n, s.d_min, s.segment_len, rng) / unit;
    const struct {
      const Eigen::MatrixXcd* c;
      BoundSense sense;
    } cases[4] = {{&b.w_mats[0], BoundSense::lower},
                  {&others, BoundSense::upper},
                  {&all, BoundSense::lower},
                  {&all, BoundSense::upper}};
    for (int k = 0; k < 4; ++k) {
      const Eigen::MatrixXcd& c = *cases[k].c;
      const QuadraticSurrogate q = build_surrogate(c, th, about, 1.0, cases[k].sense);
      auto truth = [&](const Eigen::VectorXd& z) {
        const Eigen::VectorXcd a = steering_vector(z, th, 1.0);
        return std::real(a.dot(c * a));
      };
      const double scale = c.cwiseAbs().sum();
      detail::record(fam[k], q.eval(x), truth(x), scale, cases[k].sense == BoundSense::lower);
      fam[k].worst_tangency = std::max(fam[k].worst_tangency, std::abs(q.eval(about) - truth(about)) / scale);
    }
  }
  return fam;
}

// Trajectory surrogate against the frozen objective, with the rate and sensing parts isolated by the weights.
inline std::vector<BoundFamily> trajectory_bound_sweep(const Scenario& base, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<BoundFamily> fam(2);
  fam[0].name = "trajectory rate lower";
  fam[1].name = "trajectory inverse-CRB lower";
  const Scenario scen[2] = {
      [&] {
        nlohmann::json j = scenario_to_json(base);
        j["objective"]["xi_c"] = 1.0;
        j["objective"].erase("xi_s");
        return scenario_from_json(j);
      }(),
      [&] {
        nlohmann::json j = scenario_to_json(base);
        j["objective"]["xi_c"] = 0.0;
        j["objective"].erase("xi_s");
        return scenario_from_json(j);
      }()};
  const Trajectory line = straight_line(base);
  for (int t = 0; t < 2 * trials; ++t) {
    const Scenario& s = scen[t % 2];
    BoundFamily& f = fam[t % 2];
    const Trajectory about = detail::perturb(s, line, 2.0 * s.max_step(), rng);
    std::vector<ArrayLayout> tx, rx;
    std::vector<BeamformingSolution> bf;
    for (int i = 0; i < s.intervals; ++i) {
      ArrayLayout a;
      a.kind = ArrayKind::transmit;
      a.coords = detail::random_positions(s.n_tx, s.d_min, s.segment_len, rng);
      tx.push_back(a);
      a.kind = ArrayKind::receive;
      a.coords = detail::random_positions(s.n_rx, s.d_min, s.segment_len, rng);
      rx.push_back(a);
    }
    for (int n = 0; n < s.slots; ++n) bf.push_back(detail::random_beams(s.n_tx, s.num_users(), s.pmax, rng));
    const TrajectoryLinearization lin = linearize(s, about, tx, rx, bf);
    const double radius = 0.05 * s.max_step() * (1 + t % 7);
    const Trajectory q = detail::perturb(s, about, radius, rng);
    const double truth = detail::frozen_truth(s, about, q, tx, rx, bf);
    const double at = detail::frozen_truth(s, about, about, tx, rx, bf);
    const double scale = std::max(1.0, std::abs(at));
    const double bound = trajectory_surrogate(s, lin, q);
    if (std::isfinite(bound)) detail::record(f, bound, truth, scale, true);
    else ++f.trials;
    f.worst_tangency = std::max(f.worst_tangency, std::abs(trajectory_surrogate(s, lin, about) - at) / scale);
  }
  return fam;
}

inline BoundReport surrogate_bound_sweep(const Scenario& s, int trials, std::uint64_t seed) {
  BoundReport r;
  r.families = tx_bound_sweep(s, trials, seed);
  for (BoundFamily& f : trajectory_bound_sweep(s, trials, seed + 1)) r.families.push_back(std::move(f));
  return r;
}

struct RateAccuracy {
  int cases = 0;
  int over = 0;             // cases with relative gap above the tolerance
  double worst = 0.0;       // largest |approx - mc| / mc
  double worst_rate = 0.0;  // Monte-Carlo rate of the worst case
};

// Random UAV position over the scenario area, random transmit layout, random full-power beams; every user of
// every configuration is one case.
inline RateAccuracy rate_approximation_sweep(const Scenario& s, int configs, int samples, std::uint64_t seed,
                                             double tol = 0.1) {
  std::mt19937_64 rng(seed);
  double lo_x = std::min(s.uav_start.x(), s.target.x()), hi_x = std::max(s.uav_start.x(), s.target.x());
  double lo_y = std::min(s.uav_start.y(), s.target.y()), hi_y = std::max(s.uav_start.y(), s.target.y());
  for (const Vec2& p : s.users) {
    lo_x = std::min(lo_x, p.x());
    hi_x = std::max(hi_x, p.x());
    lo_y = std::min(lo_y, p.y());
    hi_y = std::max(hi_y, p.y());
  }
  std::uniform_real_distribution<double> ux(lo_x, hi_x), uy(lo_y, hi_y);
  RateAccuracy r;
  for (int t = 0; t < configs; ++t) {
    ArrayLayout tx;
    tx.kind = ArrayKind::transmit;
    tx.coords = detail::random_positions(s.n_tx, s.d_min, s.segment_len, rng);
    const Vec2 q(ux(rng), uy(rng));
    const BeamformingSolution b = detail::random_beams(s.n_tx, s.num_users(), s.pmax, rng);
    for (int m = 0; m < s.num_users(); ++m) {
      const ChannelStats c = channel_stats(s, q, s.users[m], tx);
      const McEstimate e = mc_ergodic_rate(c, b, m, s.noise_user, samples, rng());
      const double gap = std::abs(approx_rate(c, b, m, s.noise_user) - e.mean) / e.mean;
      ++r.cases;
      if (gap > tol) ++r.over;
      if (gap > r.worst) {
        r.worst = gap;
        r.worst_rate = e.mean;
      }
    }
  }
  return r;
}

struct SignReport {
  int trials = 0;
  int failures = 0;
  double worst = 0.0;  // largest wrong-signed eigenvalue relative to ||S||
};

// Eigenvalue signs of generated curvature matrices: lower surrogates NSD, upper surrogates PSD.
inline SignReport sign_structure_sweep(int trials, std::uint64_t seed, double wavelength = 0.0107) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ang(0.0, 0.5 * M_PI);
  SignReport r;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + t % 11;
    const Eigen::MatrixXcd c = detail::random_psd(n, 1 + t % 4, rng);
    const Eigen::VectorXd about = detail::random_positions(n, 0.5 * wavelength, 20 * wavelength, rng);
    const double th = ang(rng);
    for (BoundSense sense : {BoundSense::lower, BoundSense::upper}) {
      const QuadraticSurrogate q = build_surrogate(c, th, about, wavelength, sense);
      ++r.trials;
      const double norm = q.s_mat.norm();
      if (norm == 0.0) continue;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.s_mat, Eigen::EigenvaluesOnly);
      const double wrong =
          sense == BoundSense::lower ? es.eigenvalues().maxCoeff() / norm : -es.eigenvalues().minCoeff() / norm;
      r.worst = std::max(r.worst, wrong);
      if (wrong > 1e-9) ++r.failures;
    }
  }
  return r;
}

}  // namespace faisac::oracle
