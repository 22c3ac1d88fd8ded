#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "faisac/beamforming.hpp"
#include "faisac/convex.hpp"
#include "faisac/metrics.hpp"

namespace faisac {

enum class BoundSense { lower, upper };

// 0.5 x^T S x + t^T x + u, a global bound on Re(h(x)^H C h(x)) that touches it at `about`.
struct QuadraticSurrogate {
  Eigen::MatrixXd s_mat;
  Eigen::VectorXd t_vec;
  double u_scalar = 0.0;
  BoundSense sense = BoundSense::lower;
  Eigen::VectorXd about;

  double eval(const Eigen::VectorXd& x) const { return 0.5 * x.dot(s_mat * x) + t_vec.dot(x) + u_scalar; }
};

// Each pair contributes |C_pq| cos(psi), psi = k sin(theta) (x_p - x_q) - arg C_pq, bounded by
// cos(a0) - sin(a0)(a - a0) -/+ (a - a0)^2 / 2.
inline QuadraticSurrogate build_surrogate(const Eigen::MatrixXcd& coef, double theta, const Eigen::VectorXd& about,
                                          double wavelength, BoundSense sense) {
  const int n = static_cast<int>(about.size());
  const double vt = 2.0 * M_PI / wavelength * std::sin(theta);
  const double sg = sense == BoundSense::lower ? -1.0 : 1.0;
  QuadraticSurrogate q;
  q.s_mat = Eigen::MatrixXd::Zero(n, n);
  q.t_vec = Eigen::VectorXd::Zero(n);
  q.sense = sense;
  q.about = about;
  for (int p = 0; p < n; ++p) {
    for (int r = 0; r < n; ++r) {
      const double c = std::abs(coef(p, r));
      if (c == 0.0) continue;
      const double arg = std::arg(coef(p, r));
      if (p == r) {
        q.u_scalar += c * std::cos(arg);
        continue;
      }
      const double d0 = about[p] - about[r];
      const double psi0 = vt * d0 - arg;
      const double sn = std::sin(psi0), cs = std::cos(psi0);
      const double alpha = sg * 0.5 * c * vt * vt;
      const double beta = c * (-vt * sn - sg * vt * vt * d0);
      q.u_scalar += c * (cs + vt * sn * d0 + sg * 0.5 * vt * vt * d0 * d0);
      q.s_mat(p, p) += 2.0 * alpha;
      q.s_mat(r, r) += 2.0 * alpha;
      q.s_mat(p, r) -= 2.0 * alpha;
      q.s_mat(r, p) -= 2.0 * alpha;
      q.t_vec[p] += beta;
      q.t_vec[r] -= beta;
    }
  }
  return q;
}

inline bool psd_sign_check(const QuadraticSurrogate& q) {
  if (q.s_mat.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (q.s_mat + q.s_mat.transpose()), Eigen::EigenvaluesOnly);
  const double tol = 1e-9 * std::max(q.s_mat.norm(), 1e-300);
  return q.sense == BoundSense::upper ? es.eigenvalues().minCoeff() >= -tol : es.eigenvalues().maxCoeff() <= tol;
}

inline double bilinear_value(const Eigen::MatrixXcd& coef, double theta, const Eigen::VectorXd& x, double wavelength) {
  return quad_form(steering_vector(x, theta, wavelength), coef);
}

// Position constraints 0 <= x_1, x_{k+1} - x_k >= d_min, x_n <= D_FA on a block of the program.
inline void add_spacing_constraints(convex::ConicProgram& prog, int block, int n, double d_min, double d_fa) {
  using convex::AffineExpr;
  AffineExpr lo;
  lo.add(prog.index(block, 0), -1.0);
  prog.add_linear_le(lo, "x_1 >= 0");
  for (int k = 1; k < n; ++k) {
    AffineExpr g(d_min);
    g.add(prog.index(block, k), -1.0).add(prog.index(block, k - 1), 1.0);
    prog.add_linear_le(g, "spacing " + std::to_string(k));
  }
  AffineExpr hi(-d_fa);
  hi.add(prog.index(block, n - 1), 1.0);
  prog.add_linear_le(hi, "x_n <= D");
}

// Layout strictly inside the feasible set: the slack is split evenly over both margins and all gaps.
inline Eigen::VectorXd interior_layout(int n, double d_min, double d_fa) {
  const double share = (d_fa - (n - 1) * d_min) / (n + 1);
  Eigen::VectorXd x(n);
  for (int k = 0; k < n; ++k) x[k] = (k + 1) * share + k * d_min;
  return x;
}

inline bool has_slack(int n, double d_min, double d_fa) { return (n - 1) * d_min < d_fa * (1.0 - 1e-12); }

inline double interval_objective(const Scenario& s, const Trajectory& traj, int interval, const ArrayLayout& tx,
                                 const ArrayLayout& rx, const std::vector<BeamformingSolution>& bf) {
  double v = 0.0;
  for (int n = interval * s.mu; n < (interval + 1) * s.mu; ++n) {
    v += slot_metrics(s, slot_geometry(s, traj.points[n], tx, rx), bf[n]).weighted;
  }
  return v;
}

// Transmit-position program of one interval in wavelength units; auxiliaries frozen at the expansion point.
struct P32 {
  convex::ConicProgram program;
  int x_block = -1;
  double unit = 1.0;
  int n_terms_lower = 0;
  int n_terms_upper = 0;
};

inline P32 build_p32(const Scenario& s, const Trajectory& traj, int interval, const ArrayLayout& tx,
                     const ArrayLayout& rx, const std::vector<BeamformingSolution>& bf) {
  using convex::AffineExpr;
  using convex::QuadraticForm;
  const int nt = s.n_tx;
  const int m_users = s.num_users();
  P32 p;
  p.unit = s.wavelength;
  auto& prog = p.program;
  p.x_block = prog.add_vector("x", nt);
  const Eigen::VectorXd about = tx.coords / p.unit;
  const double d_min = s.d_min / p.unit;
  const double d_fa = s.segment_len / p.unit;
  add_spacing_constraints(prog, p.x_block, nt, d_min, d_fa);

  const double snr = s.pmax / s.noise_user;
  const double sigma = std::sqrt(s.noise_user);
  const double ln2 = std::log(2.0);
  const double wc = s.xi_c / ln2;

  // Start: slightly pulled towards the interior so every barrier term is finite.
  const double eps = 1e-3;
  const Eigen::VectorXd x0 = (1.0 - eps) * about + eps * interior_layout(nt, d_min, d_fa);
  std::vector<std::pair<int, double>> start_vals;

  std::vector<int> x_idx(nt);
  for (int k = 0; k < nt; ++k) x_idx[k] = prog.index(p.x_block, k);

  AffineExpr obj;
  auto quad_terms = [&](const QuadraticSurrogate& q, double scale, AffineExpr& lin) {
    for (int k = 0; k < nt; ++k) lin.add(x_idx[k], scale * q.t_vec[k]);
    lin.constant += scale * q.u_scalar;
  };

  for (int n = interval * s.mu; n < (interval + 1) * s.mu; ++n) {
    const SlotGeometry g = slot_geometry(s, traj.points[n], tx, rx);
    const BeamformingSolution& b = bf[n];
    const std::vector<FpPair> fp = slot_fp(s, g, b);
    const Eigen::MatrixXcd rx_cov = tx_covariance(b) / s.pmax;
    const double tr_all = rx_cov.trace().real();
    for (int m = 0; m < m_users && wc != 0.0; ++m) {
      const ChannelStats& c = g.users[m];
      const double z_los = snr * c.zeta_los;
      const double z_nlos = snr * c.zeta_nlos;
      const double w = fp[m].omega;
      const double v = fp[m].varpi * sigma;
      const std::string tag = "slot " + std::to_string(n + 1) + " user " + std::to_string(m + 1);

      // Own signal, lower bound: s^2 <= z_los Q_lb(x) + z_nlos tr W_m.
      const QuadraticSurrogate own_lb = build_surrogate(b.w_mats[m] / s.pmax, c.theta, about, 1.0, BoundSense::lower);
      ++p.n_terms_lower;
      const int sv = prog.index(prog.add_scalar("s_" + tag));
      QuadraticForm qs;
      qs.indices = {sv};
      qs.indices.insert(qs.indices.end(), x_idx.begin(), x_idx.end());
      qs.matrix = Eigen::MatrixXd::Zero(nt + 1, nt + 1);
      qs.matrix(0, 0) = 2.0;
      qs.matrix.bottomRightCorner(nt, nt) = -z_los * own_lb.s_mat;
      AffineExpr es(-z_nlos * (b.w_mats[m].trace().real() / s.pmax));
      quad_terms(own_lb, -z_los, es);
      prog.add_convex_quadratic(qs, es, "signal lower bound " + tag);
      const double e_start = z_los * own_lb.eval(x0) + z_nlos * b.w_mats[m].trace().real() / s.pmax;
      start_vals.emplace_back(sv, 0.9 * std::sqrt(std::max(e_start, 0.0)));

      // Signal plus interference, upper bound: psi >= z_los (Q_ub own + sum Q_ub others + Q_ub R0).
      Eigen::MatrixXd s_up = Eigen::MatrixXd::Zero(nt, nt);
      AffineExpr up;
      double up_start = 0.0;
      auto add_up = [&](const Eigen::MatrixXcd& cm) {
        const QuadraticSurrogate q = build_surrogate(cm / s.pmax, c.theta, about, 1.0, BoundSense::upper);
        ++p.n_terms_upper;
        s_up += z_los * q.s_mat;
        quad_terms(q, z_los, up);
        up_start += z_los * q.eval(x0);
      };
      for (int i = 0; i < m_users; ++i) add_up(b.w_mats[i]);
      add_up(b.r0);
      const int pv = prog.index(prog.add_scalar("psi_" + tag));
      up.add(pv, -1.0);
      QuadraticForm qu;
      qu.indices = x_idx;
      qu.matrix = s_up;
      prog.add_convex_quadratic(qu, up, "interference upper bound " + tag);
      start_vals.emplace_back(pv, up_start + 1e-3 * std::max(1.0, std::abs(up_start)));

      obj.constant += wc * (std::log1p(w) - w - v * v * (z_nlos * tr_all + 1.0));
      obj.add(sv, wc * 2.0 * v * std::sqrt(1.0 + w));
      obj.add(pv, -wc * v * v);
    }

    const double sense_w = s.xi_s * s.inv_crb_scale * g.sensing_gain * s.pmax;
    if (sense_w != 0.0) {
      const QuadraticSurrogate sl = build_surrogate(rx_cov, g.theta_t, about, 1.0, BoundSense::lower);
      ++p.n_terms_lower;
      const int fv = prog.index(prog.add_scalar("phi_T slot " + std::to_string(n + 1)));
      QuadraticForm qf;
      qf.indices = x_idx;
      qf.matrix = sl.s_mat;
      AffineExpr ef;
      quad_terms(sl, 1.0, ef);
      ef.add(fv, -1.0);
      prog.add_concave_quadratic(qf, ef, "sensing lower bound slot " + std::to_string(n + 1));
      const double f_start = sl.eval(x0);
      start_vals.emplace_back(fv, f_start - 1e-3 * std::max(1.0, std::abs(f_start)));
      obj.add(fv, sense_w);
    }
  }
  prog.set_objective(convex::Sense::maximize, obj);

  Eigen::VectorXd z = Eigen::VectorXd::Zero(prog.num_variables());
  for (int k = 0; k < nt; ++k) z[x_idx[k]] = x0[k];
  for (const auto& [i, val] : start_vals) z[i] = val;
  prog.set_start(z);
  return p;
}

struct TxOptions {
  int inner_rounds = 1;
  convex::SolverOptions solver;
};

struct TxResult {
  ArrayLayout layout;
  convex::SolverReport report;
  double objective_before = 0.0;
  double objective_after = 0.0;
  bool accepted = false;
};

// SCA passes on one interval; a candidate is kept only if the exact interval objective does not drop.
inline TxResult optimize_interval(const Scenario& s, const Trajectory& traj, int interval, const ArrayLayout& tx,
                                  const ArrayLayout& rx, const std::vector<BeamformingSolution>& bf,
                                  const TxOptions& opt = {}) {
  TxResult r;
  r.layout = tx;
  r.objective_before = interval_objective(s, traj, interval, tx, rx, bf);
  r.objective_after = r.objective_before;
  r.report.status = convex::SolverStatus::optimal;
  if (!has_slack(s.n_tx, s.d_min, s.segment_len)) return r;
  for (int round = 0; round < std::max(1, opt.inner_rounds); ++round) {
    const P32 p = build_p32(s, traj, interval, r.layout, rx, bf);
    const convex::Solution sol = convex::solve(p.program, opt.solver);
    r.report = sol.report;
    if (sol.report.status != convex::SolverStatus::optimal && sol.report.status != convex::SolverStatus::max_iters) break;
    ArrayLayout cand;
    cand.kind = ArrayKind::transmit;
    cand.coords = sol.z.segment(p.program.index(p.x_block), s.n_tx) * p.unit;
    for (int k = 0; k < s.n_tx; ++k) cand.coords[k] = std::clamp(cand.coords[k], 0.0, s.segment_len);
    if (!layout_feasible(cand, s.d_min, s.segment_len)) break;
    const double v = interval_objective(s, traj, interval, cand, rx, bf);
    if (!(v >= r.objective_after)) break;
    const double gain = v - r.objective_after;
    r.layout = cand;
    r.objective_after = v;
    r.accepted = true;
    if (gain <= 1e-12 * std::max(1.0, std::abs(v))) break;
  }
  return r;
}

}  // namespace faisac
