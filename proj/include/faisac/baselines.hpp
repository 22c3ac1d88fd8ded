#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "faisac/ao.hpp"
#include "faisac/parallel.hpp"

namespace faisac {

// Uniform sample of the spacing polytope: sorted uniforms over the slack, then the minimum gaps added back.
inline ArrayLayout random_layout(int n, double d_min, double d_fa, ArrayKind kind, std::mt19937_64& rng) {
  const double slack = std::max(0.0, d_fa - (n - 1) * d_min);
  std::uniform_real_distribution<double> u(0.0, slack);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  std::sort(v.begin(), v.end());
  ArrayLayout l;
  l.kind = kind;
  l.coords.resize(n);
  for (int k = 0; k < n; ++k) l.coords[k] = std::min(v[k] + k * d_min, d_fa);
  return l;
}

// Stick-breaking map from the unit box to feasible layouts: u[k] takes that fraction of the slack still unused.
inline ArrayLayout decode_gaps(const double* u, int n, double d_min, double d_fa, ArrayKind kind) {
  double rest = std::max(0.0, d_fa - (n - 1) * d_min);
  double pos = 0.0;
  ArrayLayout l;
  l.kind = kind;
  l.coords.resize(n);
  for (int k = 0; k < n; ++k) {
    const double delta = std::clamp(u[k], 0.0, 1.0) * rest;
    rest -= delta;
    pos += delta + (k > 0 ? d_min : 0.0);
    l.coords[k] = std::min(pos, d_fa);
  }
  return l;
}

inline AoState state_with_layouts(const Scenario& s, std::vector<ArrayLayout> tx, std::vector<ArrayLayout> rx) {
  AoState st;
  st.trajectory = straight_line(s);
  st.tx = std::move(tx);
  st.rx = std::move(rx);
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    st.bf.push_back(mrt_beamforming(s, slot_geometry(s, st.trajectory.points[n], st.tx[i], st.rx[i])));
  }
  update_fp(s, st);
  st.initial_weighted = state_objective(s, st);
  return st;
}

inline AoOptions fixed_positions(AoOptions opt) {
  opt.optimize_tx = false;
  opt.optimize_rx = false;
  return opt;
}

inline std::vector<ArrayLayout> ula_layouts(const Scenario& s, int n, ArrayKind kind) {
  return std::vector<ArrayLayout>(s.intervals, uniform_layout(n, s.segment_len, s.d_min, kind));
}

inline AoState run_fpa(const Scenario& s, const AoOptions& opt = {}) {
  return run_ao(s,
                state_with_layouts(s, ula_layouts(s, s.n_tx, ArrayKind::transmit),
                                   ula_layouts(s, s.n_rx, ArrayKind::receive)),
                fixed_positions(opt));
}

inline std::pair<std::vector<ArrayLayout>, std::vector<ArrayLayout>> rpa_layouts(const Scenario& s,
                                                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ArrayLayout> tx, rx;
  for (int i = 0; i < s.intervals; ++i) {
    tx.push_back(random_layout(s.n_tx, s.d_min, s.segment_len, ArrayKind::transmit, rng));
    rx.push_back(random_layout(s.n_rx, s.d_min, s.segment_len, ArrayKind::receive, rng));
  }
  return {tx, rx};
}

inline AoState run_rpa(const Scenario& s, std::uint64_t seed, const AoOptions& opt = {}) {
  auto [tx, rx] = rpa_layouts(s, seed);
  return run_ao(s, state_with_layouts(s, std::move(tx), std::move(rx)), fixed_positions(opt));
}

struct PsoOptions {
  int swarm = 20;
  int iters = 30;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  double v_max = 0.5;  // per coordinate, in box units
  int workers = 1;
};

struct PsoResult {
  std::vector<double> best;
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::vector<double> history;  // global-best fitness after initialization and after each iteration
  std::vector<double> initial;  // position of the first particle at initialization
  int evaluations = 0;
};

// Global-best PSO over [0, 1]^dim with reflective walls.
template <class Fitness>
PsoResult pso_maximize(int dim, Fitness&& fitness, const PsoOptions& opt, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int np = std::max(1, opt.swarm);
  std::vector<std::vector<double>> x(np, std::vector<double>(dim)), v = x, pbest;
  for (int p = 0; p < np; ++p)
    for (int d = 0; d < dim; ++d) {
      x[p][d] = unit(rng);
      v[p][d] = opt.v_max * (2.0 * unit(rng) - 1.0);
    }
  PsoResult r;
  r.initial = x[0];
  std::vector<double> fx(np), fbest(np);
  auto evaluate = [&] {
    parallel_for(np, opt.workers, [&](int p) { fx[p] = fitness(x[p]); });
    r.evaluations += np;
  };
  evaluate();
  pbest = x;
  fbest = fx;
  for (int p = 0; p < np; ++p) {
    if (fx[p] > r.best_fitness) {
      r.best_fitness = fx[p];
      r.best = x[p];
    }
  }
  r.history.push_back(r.best_fitness);
  for (int it = 0; it < opt.iters; ++it) {
    for (int p = 0; p < np; ++p) {
      for (int d = 0; d < dim; ++d) {
        const double r1 = unit(rng), r2 = unit(rng);
        double vel = opt.inertia * v[p][d] + opt.cognitive * r1 * (pbest[p][d] - x[p][d]) +
                     opt.social * r2 * (r.best[d] - x[p][d]);
        vel = std::clamp(vel, -opt.v_max, opt.v_max);
        double pos = x[p][d] + vel;
        if (pos < 0.0) {
          pos = -pos;
          vel = -vel;
        } else if (pos > 1.0) {
          pos = 2.0 - pos;
          vel = -vel;
        }
        x[p][d] = std::clamp(pos, 0.0, 1.0);
        v[p][d] = vel;
      }
    }
    evaluate();
    for (int p = 0; p < np; ++p) {
      if (fx[p] > fbest[p]) {
        fbest[p] = fx[p];
        pbest[p] = x[p];
      }
      if (fx[p] > r.best_fitness) {
        r.best_fitness = fx[p];
        r.best = x[p];
      }
    }
    r.history.push_back(r.best_fitness);
  }
  return r;
}

// Exact objective of one interval after MRT initialization and one FP/SDR pass per slot.
inline double interval_fitness(const Scenario& s, const Trajectory& traj, int interval, const ArrayLayout& tx,
                               const ArrayLayout& rx, const BeamformingOptions& bo) {
  double v = 0.0;
  for (int n = interval * s.mu; n < (interval + 1) * s.mu; ++n) {
    const SlotGeometry g = slot_geometry(s, traj.points[n], tx, rx);
    const BeamformingSolution start = mrt_beamforming(s, g);
    BeamformingOptions o = bo;
    o.seed = bo.seed * 7919ULL + static_cast<std::uint64_t>(n);
    const SlotResult r = optimize_slot(s, g, start, o);
    v += std::max(slot_metrics(s, g, r.solution).weighted, slot_metrics(s, g, start).weighted);
  }
  return v;
}

struct PsoSearch {
  std::vector<ArrayLayout> tx, rx;
  std::vector<PsoResult> per_interval;
};

// Position search per interval on the straight-line trajectory.
inline PsoSearch pso_layouts(const Scenario& s, std::uint64_t seed, const PsoOptions& po,
                             const BeamformingOptions& bo = {}) {
  PsoSearch out;
  const Trajectory traj = straight_line(s);
  const int dim = s.n_tx + s.n_rx;
  for (int i = 0; i < s.intervals; ++i) {
    std::seed_seq sq{seed, static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(sq);
    auto fitness = [&](const std::vector<double>& u) {
      const ArrayLayout tx = decode_gaps(u.data(), s.n_tx, s.d_min, s.segment_len, ArrayKind::transmit);
      const ArrayLayout rx = decode_gaps(u.data() + s.n_tx, s.n_rx, s.d_min, s.segment_len, ArrayKind::receive);
      return interval_fitness(s, traj, i, tx, rx, bo);
    };
    PsoResult r = pso_maximize(dim, fitness, po, rng);
    out.tx.push_back(decode_gaps(r.best.data(), s.n_tx, s.d_min, s.segment_len, ArrayKind::transmit));
    out.rx.push_back(decode_gaps(r.best.data() + s.n_tx, s.n_rx, s.d_min, s.segment_len, ArrayKind::receive));
    out.per_interval.push_back(std::move(r));
  }
  return out;
}

inline AoState run_pso(const Scenario& s, std::uint64_t seed, const PsoOptions& po = {}, const AoOptions& opt = {}) {
  PsoSearch found = pso_layouts(s, seed, po, opt.beamforming);
  return run_ao(s, state_with_layouts(s, std::move(found.tx), std::move(found.rx)), fixed_positions(opt));
}

enum class Scheme { proposed, fpa, rpa, pso, sensing_only, comm_only };

inline const std::vector<std::pair<std::string, Scheme>>& scheme_names() {
  static const std::vector<std::pair<std::string, Scheme>> names = {
      {"proposed", Scheme::proposed}, {"fpa", Scheme::fpa},
      {"rpa", Scheme::rpa},           {"pso", Scheme::pso},
      {"sensing-only", Scheme::sensing_only}, {"comm-only", Scheme::comm_only}};
  return names;
}

inline std::optional<Scheme> parse_scheme(const std::string& name) {
  for (const auto& [n, sc] : scheme_names())
    if (n == name) return sc;
  return std::nullopt;
}

inline std::string scheme_name(Scheme sc) {
  for (const auto& [n, v] : scheme_names())
    if (v == sc) return n;
  return "unknown";
}

// The scenario the scheme actually optimizes: sensing-only and comm-only override the weights.
inline Scenario scheme_scenario(const Scenario& s, Scheme sc) {
  if (sc != Scheme::sensing_only && sc != Scheme::comm_only) return s;
  nlohmann::json j = scenario_to_json(s);
  j["objective"]["xi_c"] = sc == Scheme::comm_only ? 1.0 : 0.0;
  j["objective"].erase("xi_s");
  return scenario_from_json(j);
}

// Starting state of a scheme: array positions chosen (ULA, random or PSO), trajectory and beams initialized.
inline AoState scheme_initial_state(const Scenario& s, Scheme sc, std::uint64_t seed, const PsoOptions& po = {},
                                    const BeamformingOptions& bo = {}) {
  switch (sc) {
    case Scheme::fpa:
      return state_with_layouts(s, ula_layouts(s, s.n_tx, ArrayKind::transmit),
                                ula_layouts(s, s.n_rx, ArrayKind::receive));
    case Scheme::rpa: {
      auto [tx, rx] = rpa_layouts(s, seed);
      return state_with_layouts(s, std::move(tx), std::move(rx));
    }
    case Scheme::pso: {
      PsoSearch found = pso_layouts(s, seed, po, bo);
      return state_with_layouts(s, std::move(found.tx), std::move(found.rx));
    }
    default: return initialize(s);
  }
}

inline AoOptions scheme_options(Scheme sc, AoOptions opt, std::uint64_t seed) {
  opt.seed = seed;
  return sc == Scheme::fpa || sc == Scheme::rpa || sc == Scheme::pso ? fixed_positions(opt) : opt;
}

inline AoState run_scheme(const Scenario& s, Scheme sc, std::uint64_t seed, const AoOptions& opt = {},
                          const PsoOptions& po = {}) {
  const Scenario sc_s = scheme_scenario(s, sc);
  return run_ao(sc_s, scheme_initial_state(sc_s, sc, seed, po, opt.beamforming), scheme_options(sc, opt, seed));
}

}  // namespace faisac
