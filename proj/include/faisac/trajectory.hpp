#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "faisac/convex.hpp"
#include "faisac/metrics.hpp"
#include "faisac/scenario.hpp"

namespace faisac {

// Slot constants with steering vectors and Rician factors frozen at the previous trajectory.
// Rates read log2(1 + (B/d^2) / (C/d^2 + noise)), sensing reads A / d_T^2.
struct SlotLinearization {
  std::vector<double> b_coef;  // desired signal times d^2, per user
  std::vector<double> c_coef;  // interference times d^2, per user
  std::vector<double> d2;      // squared user distances at the expansion point
  double a_coef = 0.0;         // inverse CRB times d_T^2
  double d2_t = 0.0;
};

struct TrajectoryLinearization {
  Trajectory about;
  std::vector<SlotLinearization> slots;
};

inline TrajectoryLinearization linearize(const Scenario& s, const Trajectory& prev, const std::vector<ArrayLayout>& tx,
                                         const std::vector<ArrayLayout>& rx,
                                         const std::vector<BeamformingSolution>& bf) {
  TrajectoryLinearization lin;
  lin.about = prev;
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    const SlotGeometry g = slot_geometry(s, prev.points[n], tx[i], rx[i]);
    SlotLinearization sl;
    for (int m = 0; m < s.num_users(); ++m) {
      const ChannelStats& c = g.users[m];
      const double d2 = c.dist * c.dist;
      const SignalPowers p = signal_powers(c, bf[n], m, 0.0);
      sl.b_coef.push_back(std::max(0.0, p.signal * d2));
      sl.c_coef.push_back(std::max(0.0, p.interference * d2));
      sl.d2.push_back(d2);
    }
    sl.d2_t = g.dist_t * g.dist_t;
    sl.a_coef = g.sensing_gain * sl.d2_t * quad_form(g.a_t, tx_covariance(bf[n]));
    lin.slots.push_back(std::move(sl));
  }
  return lin;
}

inline double squared_distance(const Scenario& s, const Vec2& q, const Vec2& ground) {
  return (q - ground).squaredNorm() + s.altitude * s.altitude;
}

// Weighted objective with the steering frozen; equals the exact objective at the expansion point.
inline double frozen_objective(const Scenario& s, const TrajectoryLinearization& lin, const Trajectory& q) {
  double v = 0.0;
  for (int n = 0; n < s.slots; ++n) {
    const SlotLinearization& sl = lin.slots[n];
    for (int m = 0; m < s.num_users(); ++m) {
      const double d2 = squared_distance(s, q.points[n], s.users[m]);
      v += s.xi_c * std::log2(1.0 + (sl.b_coef[m] / d2) / (sl.c_coef[m] / d2 + s.noise_user));
    }
    v += s.xi_s * s.inv_crb_scale * sl.a_coef / squared_distance(s, q.points[n], s.target);
  }
  return v;
}

// Lower bound on the frozen objective: linearized signal term, interference term over the affine
// distance minorant, tangent sensing term. Returns -inf where the affine minorant is not positive.
inline double trajectory_surrogate(const Scenario& s, const TrajectoryLinearization& lin, const Trajectory& q) {
  double v = 0.0;
  for (int n = 0; n < s.slots; ++n) {
    const SlotLinearization& sl = lin.slots[n];
    const Vec2& ql = lin.about.points[n];
    for (int m = 0; m < s.num_users(); ++m) {
      const double bc = sl.b_coef[m] + sl.c_coef[m];
      const double d2l = sl.d2[m];
      const double p_l = bc / d2l + s.noise_user;
      const double grad = -bc / (d2l * d2l) / p_l / std::log(2.0);
      const double r1 = std::log2(p_l) + grad * (squared_distance(s, q.points[n], s.users[m]) - d2l);
      double r2 = std::log2(s.noise_user);
      if (sl.c_coef[m] > 0.0) {
        const double aff = d2l + 2.0 * (ql - s.users[m]).dot(q.points[n] - ql);
        if (!(aff > 0.0)) return -std::numeric_limits<double>::infinity();
        r2 = std::log2(sl.c_coef[m] / aff + s.noise_user);
      }
      v += s.xi_c * (r1 - r2);
    }
    const double d2t = sl.d2_t;
    v += s.xi_s * s.inv_crb_scale * sl.a_coef *
         (2.0 / d2t - squared_distance(s, q.points[n], s.target) / (d2t * d2t));
  }
  return v;
}

inline bool trajectory_has_freedom(const Scenario& s) {
  return s.slots > 2 && (s.uav_end - s.uav_start).norm() < (s.slots - 1) * s.max_step() * (1.0 - 1e-9);
}

// Trajectory program with lengths in units of the altitude and powers in units of the user noise.
struct P51 {
  convex::ConicProgram program;
  std::vector<int> q_blocks;  // per slot; -1 for the fixed endpoints
  double unit = 1.0;
  int n_eta = 0;
};

namespace detail {

// A slot position: free 2-vector at z[index], or a constant.
struct PointRef {
  int index = -1;
  Vec2 value{0.0, 0.0};
};

// ||P - Q||^2 - r2 as a quadratic form plus an affine part.
inline std::pair<convex::QuadraticForm, convex::AffineExpr> squared_gap(const PointRef& p, const PointRef& q,
                                                                        double r2) {
  convex::QuadraticForm qf;
  convex::AffineExpr af(-r2);
  const Vec2 cp = p.index >= 0 ? Vec2::Zero() : p.value;
  const Vec2 cq = q.index >= 0 ? Vec2::Zero() : q.value;
  const Vec2 c = cp - cq;
  af.constant += c.squaredNorm();
  std::vector<std::pair<int, double>> vars;
  if (p.index >= 0) vars.push_back({p.index, 1.0});
  if (q.index >= 0) vars.push_back({q.index, -1.0});
  const int k = static_cast<int>(vars.size());
  qf.matrix = Eigen::MatrixXd::Zero(2 * k, 2 * k);
  for (int a = 0; a < k; ++a) {
    for (int dim = 0; dim < 2; ++dim) {
      qf.indices.push_back(vars[a].first + dim);
      af.add(vars[a].first + dim, 2.0 * vars[a].second * c[dim]);
    }
    for (int b = 0; b < k; ++b) {
      for (int dim = 0; dim < 2; ++dim) qf.matrix(2 * a + dim, 2 * b + dim) = 2.0 * vars[a].second * vars[b].second;
    }
  }
  return {qf, af};
}

}  // namespace detail

inline P51 build_p51(const Scenario& s, const TrajectoryLinearization& lin, double start_blend = 1e-3) {
  if (!trajectory_feasible(s, lin.about, 1e-7)) throw std::invalid_argument("build_p51: expansion trajectory infeasible");
  P51 p;
  auto& prog = p.program;
  const double h = s.altitude;
  p.unit = h;
  const int nslots = s.slots;
  const Trajectory line = straight_line(s);
  std::vector<Vec2> start(nslots), about(nslots);
  for (int n = 0; n < nslots; ++n) {
    about[n] = lin.about.points[n] / h;
    start[n] = ((1.0 - start_blend) * lin.about.points[n] + start_blend * line.points[n]) / h;
  }
  start.front() = s.uav_start / h;
  start.back() = s.uav_end / h;

  p.q_blocks.assign(nslots, -1);
  for (int n = 1; n + 1 < nslots; ++n) p.q_blocks[n] = prog.add_vector("q slot " + std::to_string(n + 1), 2);
  std::vector<detail::PointRef> refs(nslots);
  for (int n = 0; n < nslots; ++n) {
    if (p.q_blocks[n] >= 0) refs[n].index = prog.index(p.q_blocks[n], 0);
    else refs[n].value = about[n];
  }
  std::vector<std::pair<int, double>> start_vals;
  for (int n = 1; n + 1 < nslots; ++n) {
    start_vals.push_back({refs[n].index, start[n].x()});
    start_vals.push_back({refs[n].index + 1, start[n].y()});
  }

  const double step = s.max_step() / h;
  for (int n = 1; n < nslots; ++n) {
    if (refs[n].index < 0 && refs[n - 1].index < 0) continue;
    auto [qf, af] = detail::squared_gap(refs[n], refs[n - 1], step * step);
    prog.add_convex_quadratic(qf, af, "speed limit step " + std::to_string(n));
  }

  const double noise = s.noise_user;
  const double ln2 = std::log(2.0);
  convex::AffineExpr obj;
  auto margin = [](double v) { return 1e-3 * std::max(1.0, std::abs(v)); };
  for (int n = 0; n < nslots; ++n) {
    const SlotLinearization& sl = lin.slots[n];
    const bool fixed = refs[n].index < 0;
    const std::string tag = "slot " + std::to_string(n + 1);
    for (int m = 0; m < s.num_users(); ++m) {
      const Vec2 qm = s.users[m] / h;
      const double b = sl.b_coef[m] / (h * h * noise);
      const double c = sl.c_coef[m] / (h * h * noise);
      const double d2l = sl.d2[m] / (h * h);
      const double p_l = (b + c) / d2l + 1.0;
      const double grad = -(b + c) / (d2l * d2l) / p_l;
      const double wc = s.xi_c / ln2;
      if (fixed) {
        obj.constant += wc * (std::log(p_l) - std::log1p(c / d2l));
        continue;
      }
      obj.constant += wc * (std::log(p_l) - grad * d2l);
      if (grad != 0.0 && wc != 0.0) {
        // D >= ||q - q_m||^2 + 1
        const int dv = prog.index(prog.add_scalar("d2 " + tag + " user " + std::to_string(m + 1)));
        detail::PointRef g;
        g.value = qm;
        auto [qf, af] = detail::squared_gap(refs[n], g, -1.0);
        af.add(dv, -1.0);
        prog.add_convex_quadratic(qf, af, "distance epigraph " + tag + " user " + std::to_string(m + 1));
        const double d0 = (start[n] - qm).squaredNorm() + 1.0;
        start_vals.push_back({dv, d0 + margin(d0)});
        obj.add(dv, wc * grad);
      }
      if (c > 0.0 && s.xi_c != 0.0) {
        // eta >= -ln(d_l^2 + 2 (q_l - q_m).(q - q_l))
        const int ev = prog.index(prog.add_scalar("eta " + tag + " user " + std::to_string(m + 1)));
        ++p.n_eta;
        convex::AffineExpr arg(d2l);
        const Vec2 gvec = 2.0 * (about[n] - qm);
        arg.constant -= gvec.dot(about[n]);
        arg.add(refs[n].index, gvec.x());
        arg.add(refs[n].index + 1, gvec.y());
        convex::AffineExpr lhs;
        lhs.add(ev, 1.0);
        prog.add_log_affine(lhs, arg, "interference distance bound " + tag + " user " + std::to_string(m + 1));
        const double a0 = d2l + gvec.dot(start[n] - about[n]);
        const double e0 = -std::log(a0);
        start_vals.push_back({ev, e0 + margin(e0)});
        convex::LogSumExp l;
        l.weight = wc;
        convex::AffineExpr u;
        u.add(ev, 1.0);
        l.terms.push_back({c, u});
        l.terms.push_back({1.0, convex::AffineExpr(0.0)});
        prog.add_log_sum_exp(std::move(l));
      }
    }
    const double ws = s.xi_s * s.inv_crb_scale * sl.a_coef / (h * h);
    if (ws == 0.0) continue;
    const double d2t = sl.d2_t / (h * h);
    if (fixed) {
      obj.constant += ws / d2t;
      continue;
    }
    obj.constant += ws * 2.0 / d2t;
    const int tv = prog.index(prog.add_scalar("d2 target " + tag));
    detail::PointRef g;
    g.value = s.target / h;
    auto [qf, af] = detail::squared_gap(refs[n], g, -1.0);
    af.add(tv, -1.0);
    prog.add_convex_quadratic(qf, af, "target distance epigraph " + tag);
    const double d0 = (start[n] - s.target / h).squaredNorm() + 1.0;
    start_vals.push_back({tv, d0 + margin(d0)});
    obj.add(tv, -ws / (d2t * d2t));
  }
  prog.set_objective(convex::Sense::maximize, obj);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(prog.num_variables());
  for (const auto& [i, v] : start_vals) z[i] = v;
  prog.set_start(z);
  return p;
}

inline Trajectory p51_trajectory(const Scenario& s, const P51& p, const Eigen::VectorXd& z) {
  Trajectory t;
  t.points.resize(s.slots);
  for (int n = 0; n < s.slots; ++n) {
    if (p.q_blocks[n] < 0) continue;
    const int i = p.program.index(p.q_blocks[n], 0);
    t.points[n] = Vec2(z[i], z[i + 1]) * p.unit;
  }
  t.points.front() = s.uav_start;
  t.points.back() = s.uav_end;
  return t;
}

struct TrajectoryOptions {
  convex::SolverOptions solver;
  bool exact_safeguard = true;  // shorten the step if the exact objective drops
  int max_backtracks = 30;
};

struct TrajectoryResult {
  Trajectory trajectory;
  convex::SolverReport report;
  double frozen_before = 0.0;
  double frozen_after = 0.0;
  double exact_before = 0.0;
  double exact_after = 0.0;
  int backtracks = 0;
  bool accepted = false;
};

inline double exact_objective(const Scenario& s, const Trajectory& t, const std::vector<ArrayLayout>& tx,
                              const std::vector<ArrayLayout>& rx, const std::vector<BeamformingSolution>& bf) {
  return evaluate_objective(s, t, tx, rx, bf).weighted;
}

inline TrajectoryResult optimize_trajectory(const Scenario& s, const Trajectory& prev, const std::vector<ArrayLayout>& tx,
                                            const std::vector<ArrayLayout>& rx,
                                            const std::vector<BeamformingSolution>& bf,
                                            const TrajectoryOptions& opt = {}) {
  TrajectoryResult r;
  r.trajectory = prev;
  r.exact_before = r.exact_after = exact_objective(s, prev, tx, rx, bf);
  r.frozen_before = r.frozen_after = r.exact_before;
  r.report.status = convex::SolverStatus::optimal;
  if (!trajectory_has_freedom(s)) return r;
  const TrajectoryLinearization lin = linearize(s, prev, tx, rx, bf);
  const P51 p = build_p51(s, lin);
  const convex::Solution sol = convex::solve(p.program, opt.solver);
  r.report = sol.report;
  if (sol.report.status != convex::SolverStatus::optimal && sol.report.status != convex::SolverStatus::max_iters) return r;
  const Trajectory cand = p51_trajectory(s, p, sol.z);
  if (!trajectory_feasible(s, cand, 1e-7)) return r;
  const double frozen = frozen_objective(s, lin, cand);
  if (!(frozen >= r.frozen_before)) return r;
  double exact = exact_objective(s, cand, tx, rx, bf);
  if (!opt.exact_safeguard || exact >= r.exact_before) {
    r.trajectory = cand;
    r.frozen_after = frozen;
    r.exact_after = exact;
    r.accepted = true;
    return r;
  }
  // The frozen steering is not a global minorant of the exact objective: take the best of the
  // geometrically shortened steps towards the candidate.
  double a = 1.0, best = r.exact_before;
  Trajectory best_t = prev;
  for (int k = 1; k <= opt.max_backtracks; ++k) {
    a *= 0.5;
    Trajectory t = prev;
    for (int n = 0; n < s.slots; ++n) t.points[n] = prev.points[n] + a * (cand.points[n] - prev.points[n]);
    exact = exact_objective(s, t, tx, rx, bf);
    if (exact > best) {
      best = exact;
      best_t = t;
      r.backtracks = k;
    }
  }
  if (best > r.exact_before) {
    r.trajectory = best_t;
    r.frozen_after = frozen_objective(s, lin, best_t);
    r.exact_after = best;
    r.accepted = true;
  }
  return r;
}

}  // namespace faisac
