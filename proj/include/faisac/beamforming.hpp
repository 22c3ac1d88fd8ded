#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "faisac/convex.hpp"
#include "faisac/metrics.hpp"

namespace faisac {

// Quadratic-transform auxiliaries, omega(m, n) and varpi(m, n), in physical units.
struct FpAuxiliaries {
  Eigen::MatrixXd omega;
  Eigen::MatrixXd varpi;

  FpAuxiliaries() = default;
  FpAuxiliaries(int users, int slots) : omega(Eigen::MatrixXd::Zero(users, slots)), varpi(Eigen::MatrixXd::Zero(users, slots)) {}
};

struct FpPair {
  double omega = 0.0;
  double varpi = 0.0;
};

inline FpPair fp_update(double e, double f) {
  FpPair p;
  p.omega = e / f;
  p.varpi = e > 0.0 ? std::sqrt(e * (1.0 + p.omega)) / (e + f) : 0.0;
  return p;
}

// Auxiliaries of every user for one slot at the current design.
inline std::vector<FpPair> slot_fp(const Scenario& s, const SlotGeometry& g, const BeamformingSolution& b) {
  std::vector<FpPair> out;
  for (int m = 0; m < s.num_users(); ++m) {
    const SignalPowers p = signal_powers(g.users[m], b, m, s.noise_user);
    out.push_back(fp_update(p.signal, p.interference));
  }
  return out;
}

// Per-user rate surrogate in bits, ln(1+w) - w + 2 v sqrt((1+w) E) - v^2 (E + F) over ln 2.
inline double fp_rate_surrogate(const FpPair& a, double e, double f) {
  return (std::log1p(a.omega) - a.omega + 2.0 * a.varpi * std::sqrt(std::max(e, 0.0) * (1.0 + a.omega)) -
          a.varpi * a.varpi * (e + f)) /
         std::log(2.0);
}

inline double slot_surrogate(const Scenario& s, const SlotGeometry& g, const BeamformingSolution& b,
                             const std::vector<FpPair>& fp) {
  double r = 0.0;
  for (int m = 0; m < s.num_users(); ++m) {
    const SignalPowers p = signal_powers(g.users[m], b, m, s.noise_user);
    r += fp_rate_surrogate(fp[m], p.signal, p.interference);
  }
  return s.xi_c * r + s.xi_s * s.inv_crb_scale * g.sensing_gain * quad_form(g.a_t, tx_covariance(b));
}

// Even split of the power budget over all beams plus the sensing covariance.
inline BeamformingSolution isotropic_beamforming(const Scenario& s) {
  BeamformingSolution b = zero_beamforming(s.n_tx, s.num_users());
  const Eigen::MatrixXcd iso =
      Eigen::MatrixXcd::Identity(s.n_tx, s.n_tx) * (s.pmax / (s.n_tx * (s.num_users() + 1.0)));
  for (auto& w : b.w_mats) w = iso;
  b.r0 = iso;
  return b;
}

// Relaxed slot program in normalized units: covariances divided by pmax, powers divided by the user noise.
struct P22 {
  convex::ConicProgram program;
  std::vector<int> w_blocks;
  int r0_block = -1;
  std::vector<int> s_vars;
  double power_scale = 1.0;
};

inline P22 build_p22(const Scenario& s, const SlotGeometry& g, const std::vector<FpPair>& fp,
                     const BeamformingSolution& start) {
  using convex::AffineExpr;
  const int n = s.n_tx;
  const int m_users = s.num_users();
  P22 p;
  p.power_scale = s.pmax;
  auto& prog = p.program;
  for (int m = 0; m < m_users; ++m) p.w_blocks.push_back(prog.add_hermitian_psd("W" + std::to_string(m + 1), n));
  p.r0_block = prog.add_hermitian_psd("R0", n);
  for (int m = 0; m < m_users; ++m) p.s_vars.push_back(prog.index(prog.add_scalar("s" + std::to_string(m + 1))));

  std::vector<int> all = p.w_blocks;
  all.push_back(p.r0_block);

  const double snr = s.pmax / s.noise_user;
  const double sigma = std::sqrt(s.noise_user);
  std::vector<Eigen::MatrixXcd> gain;
  for (int m = 0; m < m_users; ++m) {
    const ChannelStats& c = g.users[m];
    gain.push_back(snr * (c.zeta_los * c.h_bar * c.h_bar.adjoint() +
                          c.zeta_nlos * Eigen::MatrixXcd::Identity(n, n)));
  }

  const double ln2 = std::log(2.0);
  AffineExpr obj;
  for (int m = 0; m < m_users; ++m) {
    const double w = fp[m].omega;
    const double v = fp[m].varpi * sigma;
    const double wc = s.xi_c / ln2;
    obj.constant += wc * (std::log1p(w) - w - v * v);
    obj.add(p.s_vars[m], wc * 2.0 * v * std::sqrt(1.0 + w));
    for (int b : all) obj.add(prog.hermitian_trace(b, gain[m]), -wc * v * v);

    convex::QuadraticForm q;
    q.indices = {p.s_vars[m]};
    q.matrix = Eigen::MatrixXd::Constant(1, 1, 2.0);
    prog.add_convex_quadratic(q, prog.hermitian_trace(p.w_blocks[m], gain[m]).scaled(-1.0),
                              "signal hypograph " + std::to_string(m + 1));
  }
  const double sense = s.xi_s * s.inv_crb_scale * g.sensing_gain * s.pmax;
  if (sense != 0.0) {
    const Eigen::MatrixXcd aa = g.a_t * g.a_t.adjoint();
    for (int b : all) obj.add(prog.hermitian_trace(b, aa), sense);
  }
  prog.set_objective(convex::Sense::maximize, obj);

  AffineExpr power(-1.0);
  for (int b : all) power.add(prog.hermitian_trace(b, Eigen::MatrixXcd::Identity(n, n)));
  prog.add_linear_le(power, "power budget");

  // Strictly interior start pulled slightly towards the isotropic point.
  const double eps = 0.1;
  const double iso = 0.5 * eps / (n * (m_users + 1.0));
  Eigen::VectorXd z = Eigen::VectorXd::Zero(prog.num_variables());
  auto shrink = [&](const Eigen::MatrixXcd& x) {
    return Eigen::MatrixXcd((1.0 - eps) * x / s.pmax + iso * Eigen::MatrixXcd::Identity(n, n));
  };
  const bool have = static_cast<int>(start.w_mats.size()) == m_users && start.r0.rows() == n && s.pmax > 0.0;
  for (int m = 0; m < m_users; ++m) {
    prog.store_hermitian(p.w_blocks[m], have ? shrink(start.w_mats[m]) : shrink(Eigen::MatrixXcd::Zero(n, n)), z);
  }
  prog.store_hermitian(p.r0_block, have ? shrink(start.r0) : shrink(Eigen::MatrixXcd::Zero(n, n)), z);
  for (int m = 0; m < m_users; ++m) {
    const double e = prog.hermitian_trace(p.w_blocks[m], gain[m]).eval(z);
    z[p.s_vars[m]] = 0.9 * std::sqrt(std::max(e, 0.0));
  }
  prog.set_start(z);
  return p;
}

inline BeamformingSolution p22_solution(const P22& p, const Eigen::VectorXd& z) {
  BeamformingSolution b;
  for (int blk : p.w_blocks) b.w_mats.push_back(p.power_scale * p.program.hermitian_value(blk, z));
  b.r0 = p.power_scale * p.program.hermitian_value(p.r0_block, z);
  return b;
}

struct RankOne {
  Eigen::VectorXcd w;
  double ratio = 0.0;
};

// Dominant eigenpair sqrt(l1) u1 and the spectral share l1 / tr.
inline RankOne extract_rank_one(const Eigen::MatrixXcd& w_mat) {
  RankOne r;
  const int n = static_cast<int>(w_mat.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (w_mat + w_mat.adjoint()));
  const double l1 = std::max(es.eigenvalues()[n - 1], 0.0);
  const double tr = w_mat.trace().real();
  r.w = std::sqrt(l1) * es.eigenvectors().col(n - 1);
  r.ratio = tr > 0.0 ? l1 / tr : 1.0;
  return r;
}

inline constexpr double kRankOneThreshold = 1.0 - 1e-3;
inline constexpr double kInactiveBeamShare = 1e-6;

// Gaussian rounding of W_m: candidates ~ CN(0, W_m) rescaled to tr(W_m), best weighted slot value wins.
inline Eigen::VectorXcd randomize_rank_one(const Scenario& s, const SlotGeometry& g, const BeamformingSolution& b,
                                           int m, std::uint64_t seed, int samples = 50) {
  const Eigen::MatrixXcd& w_mat = b.w_mats[m];
  const int n = static_cast<int>(w_mat.rows());
  const double tr = std::max(w_mat.trace().real(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (w_mat + w_mat.adjoint()));
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXcd root = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();

  BeamformingSolution trial = b;
  auto value = [&](const Eigen::VectorXcd& w) {
    trial.w_mats[m] = w * w.adjoint();
    return slot_metrics(s, g, trial).weighted;
  };
  auto rescale = [&](Eigen::VectorXcd w) {
    const double nw = w.squaredNorm();
    return nw > 0.0 ? Eigen::VectorXcd(w * std::sqrt(tr / nw)) : w;
  };
  Eigen::VectorXcd best = rescale(extract_rank_one(w_mat).w);
  double best_v = value(best);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXcd x(n);
    for (int i = 0; i < n; ++i) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      x[i] = cd(re, im);
    }
    const Eigen::VectorXcd w = rescale(root * x);
    const double v = value(w);
    if (v > best_v) {
      best_v = v;
      best = w;
    }
  }
  return best;
}

struct BeamformingOptions {
  int inner_rounds = 1;
  convex::SolverOptions solver{1e-8, 1e-9, 200, 15.0};
  std::uint64_t seed = 0;
};

struct SlotResult {
  BeamformingSolution solution;
  convex::SolverReport report;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  std::vector<int> fallback_users;
  bool accepted = true;
};

// FP rounds on one slot: auxiliaries at the current design, then the relaxed program, then beam extraction.
inline SlotResult optimize_slot(const Scenario& s, const SlotGeometry& g, const BeamformingSolution& current,
                                const BeamformingOptions& opt = {}) {
  SlotResult r;
  const int m_users = s.num_users();
  if (!(s.pmax > 0.0)) {
    r.solution = zero_beamforming(s.n_tx, m_users);
    for (int m = 0; m < m_users; ++m) {
      r.solution.w_vecs.push_back(Eigen::VectorXcd::Zero(s.n_tx));
      r.solution.rank_one_ratio.push_back(1.0);
    }
    r.report.status = convex::SolverStatus::optimal;
    return r;
  }
  BeamformingSolution b = current.total_power() > 0.0 ? current : isotropic_beamforming(s);
  for (int round = 0; round < std::max(1, opt.inner_rounds); ++round) {
    const std::vector<FpPair> fp = slot_fp(s, g, b);
    const double before = slot_surrogate(s, g, b, fp);
    const P22 p = build_p22(s, g, fp, b);
    const convex::Solution sol = convex::solve(p.program, opt.solver);
    r.report = sol.report;
    if (round == 0) r.surrogate_before = before;
    if (sol.report.status != convex::SolverStatus::optimal && sol.report.status != convex::SolverStatus::max_iters) {
      r.accepted = false;
      break;
    }
    BeamformingSolution next = p22_solution(p, sol.z);
    const double after = slot_surrogate(s, g, next, fp);
    if (after < before) {
      r.accepted = round > 0;
      break;
    }
    r.surrogate_after = after;
    b = std::move(next);
  }
  if (!r.accepted) b = current.total_power() > 0.0 ? current : isotropic_beamforming(s);

  b.w_vecs.clear();
  b.rank_one_ratio.clear();
  for (int m = 0; m < m_users; ++m) {
    RankOne ro = extract_rank_one(b.w_mats[m]);
    // A switched-off beam (rank zero up to solver tolerance) needs no rounding.
    if (b.w_mats[m].trace().real() <= kInactiveBeamShare * s.pmax) ro.ratio = 1.0;
    b.rank_one_ratio.push_back(ro.ratio);
    if (ro.ratio >= kRankOneThreshold) {
      b.w_vecs.push_back(ro.w);
    } else {
      r.fallback_users.push_back(m);
      const Eigen::VectorXcd w = randomize_rank_one(s, g, b, m, opt.seed * 1000003ULL + static_cast<std::uint64_t>(m));
      b.w_mats[m] = w * w.adjoint();
      b.w_vecs.push_back(w);
    }
  }
  r.solution = std::move(b);
  return r;
}

}  // namespace faisac
