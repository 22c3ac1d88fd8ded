#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "faisac/beamforming.hpp"
#include "faisac/rxarray.hpp"
#include "faisac/trajectory.hpp"
#include "faisac/txarray.hpp"

namespace faisac {

struct IterationRecord {
  int iteration = 0;
  double weighted = 0.0;
  double sum_rate = 0.0;
  double total_inv_crb = 0.0;
  // Weighted objective after each block update of the iteration.
  double after_beamforming = 0.0;
  double after_tx = 0.0;
  double after_rx = 0.0;
  double after_trajectory = 0.0;
  double min_rank_one_ratio = 1.0;
  int fallbacks = 0;
  int rejected_steps = 0;      // block updates discarded because the objective would drop
  int trajectory_backtracks = 0;
  int solver_warnings = 0;     // solves that ended without the optimal status
  int newton_steps = 0;
};

struct AoState {
  Trajectory trajectory;
  std::vector<ArrayLayout> tx;
  std::vector<ArrayLayout> rx;
  std::vector<BeamformingSolution> bf;
  FpAuxiliaries fp;
  double initial_weighted = 0.0;
  std::vector<IterationRecord> trace;
  int iteration = 0;
  bool converged = false;
};

struct AoOptions {
  double eps = 1e-3;
  int max_outer = 50;
  bool optimize_tx = true;
  bool optimize_rx = true;
  bool optimize_trajectory = true;
  BeamformingOptions beamforming;
  TxOptions tx;
  TrajectoryOptions trajectory;
  std::uint64_t seed = 0;
};

inline void update_fp(const Scenario& s, AoState& st) {
  st.fp = FpAuxiliaries(s.num_users(), s.slots);
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    const std::vector<FpPair> fp = slot_fp(s, slot_geometry(s, st.trajectory.points[n], st.tx[i], st.rx[i]), st.bf[n]);
    for (int m = 0; m < s.num_users(); ++m) {
      st.fp.omega(m, n) = fp[m].omega;
      st.fp.varpi(m, n) = fp[m].varpi;
    }
  }
}

// Equal power over the users, each beam matched to the user's line-of-sight steering vector; no sensing covariance.
inline BeamformingSolution mrt_beamforming(const Scenario& s, const SlotGeometry& g) {
  const int m_users = s.num_users();
  BeamformingSolution b = zero_beamforming(s.n_tx, m_users);
  for (int m = 0; m < m_users; ++m) {
    const Eigen::VectorXcd w = g.users[m].h_bar * std::sqrt(s.pmax / m_users / s.n_tx);
    b.w_mats[m] = w * w.adjoint();
    b.w_vecs.push_back(w);
    b.rank_one_ratio.push_back(1.0);
  }
  return b;
}

inline AoState initialize(const Scenario& s) {
  AoState st;
  st.trajectory = straight_line(s);
  st.tx.assign(s.intervals, uniform_layout(s.n_tx, s.segment_len, s.d_min, ArrayKind::transmit));
  st.rx.assign(s.intervals, optimal_rx_positions(s.n_rx, s.d_min, s.segment_len));
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    st.bf.push_back(mrt_beamforming(s, slot_geometry(s, st.trajectory.points[n], st.tx[i], st.rx[i])));
  }
  update_fp(s, st);
  st.initial_weighted = evaluate_objective(s, st.trajectory, st.tx, st.rx, st.bf).weighted;
  return st;
}

inline double state_objective(const Scenario& s, const AoState& st) {
  return evaluate_objective(s, st.trajectory, st.tx, st.rx, st.bf).weighted;
}

// Coarse cap from the power budget: best-case path loss at the altitude and full coherent gain.
inline double objective_upper_bound(const Scenario& s) {
  const double beta_max = s.h0 / (s.altitude * s.altitude);
  const double rate = std::log2(1.0 + s.pmax * beta_max * s.n_tx / s.noise_user);
  const double k0 = 2.0 * M_PI / s.wavelength;
  const double alpha_max = s.rcs * s.rcs * s.frame_len * k0 * k0 / (2.0 * s.noise_radar * s.altitude * s.altitude);
  const double tss_max = total_sum_of_squares(optimal_rx_positions(s.n_rx, s.d_min, s.segment_len).coords);
  return s.xi_c * s.slots * s.num_users() * rate + s.xi_s * s.inv_crb_scale * s.slots * alpha_max * s.pmax * s.n_tx * tss_max;
}

// One outer iteration: beamforming, transmit positions, receive positions, trajectory.
inline IterationRecord ao_iteration(const Scenario& s, AoState& st, const AoOptions& opt) {
  IterationRecord rec;
  rec.iteration = st.iteration + 1;
  auto note = [&](const convex::SolverReport& r) {
    rec.newton_steps += r.iterations + r.phase_one_iterations;
    if (r.status != convex::SolverStatus::optimal) ++rec.solver_warnings;
  };

  update_fp(s, st);
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    const SlotGeometry g = slot_geometry(s, st.trajectory.points[n], st.tx[i], st.rx[i]);
    BeamformingOptions bo = opt.beamforming;
    bo.seed = opt.seed * 7919ULL + static_cast<std::uint64_t>(rec.iteration) * 131ULL + static_cast<std::uint64_t>(n);
    const SlotResult r = optimize_slot(s, g, st.bf[n], bo);
    note(r.report);
    rec.fallbacks += static_cast<int>(r.fallback_users.size());
    const double before = slot_metrics(s, g, st.bf[n]).weighted;
    const double after = slot_metrics(s, g, r.solution).weighted;
    if (after >= before) {
      st.bf[n] = r.solution;
    } else {
      ++rec.rejected_steps;
    }
    for (double v : st.bf[n].rank_one_ratio) rec.min_rank_one_ratio = std::min(rec.min_rank_one_ratio, v);
  }
  rec.after_beamforming = state_objective(s, st);

  update_fp(s, st);
  if (opt.optimize_tx) {
    for (int i = 0; i < s.intervals; ++i) {
      const TxResult r = optimize_interval(s, st.trajectory, i, st.tx[i], st.rx[i], st.bf, opt.tx);
      note(r.report);
      if (r.accepted) st.tx[i] = r.layout;
    }
  }
  rec.after_tx = state_objective(s, st);

  if (opt.optimize_rx) {
    const ArrayLayout y = optimal_rx_positions(s.n_rx, s.d_min, s.segment_len);
    std::vector<ArrayLayout> rx(s.intervals, y);
    const double v = evaluate_objective(s, st.trajectory, st.tx, rx, st.bf).weighted;
    if (v >= rec.after_tx) st.rx = std::move(rx);
    else ++rec.rejected_steps;
  }
  rec.after_rx = state_objective(s, st);

  if (opt.optimize_trajectory) {
    const TrajectoryResult r = optimize_trajectory(s, st.trajectory, st.tx, st.rx, st.bf, opt.trajectory);
    note(r.report);
    rec.trajectory_backtracks = r.backtracks;
    if (r.accepted) st.trajectory = r.trajectory;
    else ++rec.rejected_steps;
  }
  const ObjectiveBreakdown o = evaluate_objective(s, st.trajectory, st.tx, st.rx, st.bf);
  rec.after_trajectory = o.weighted;
  rec.weighted = o.weighted;
  rec.sum_rate = o.sum_rate;
  rec.total_inv_crb = o.total_inv_crb;
  ++st.iteration;
  st.trace.push_back(rec);
  return rec;
}

// Alternating ascent until the objective gain of an outer iteration drops below eps.
inline AoState run_ao(const Scenario& s, AoState st, const AoOptions& opt = {}) {
  double prev = st.trace.empty() ? state_objective(s, st) : st.trace.back().weighted;
  while (st.iteration < opt.max_outer) {
    const IterationRecord rec = ao_iteration(s, st, opt);
    if (!(rec.weighted - prev >= opt.eps)) {
      st.converged = true;
      break;
    }
    prev = rec.weighted;
  }
  return st;
}

inline AoState run_proposed(const Scenario& s, const AoOptions& opt = {}) { return run_ao(s, initialize(s), opt); }

}  // namespace faisac
