#include <chrono>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "faisac/baselines.hpp"
#include "faisac/io.hpp"
#include "faisac/oracles.hpp"

using namespace faisac;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 2;

struct Common {
  std::string scenario;
  std::uint64_t seed = 1;
  double eps = 1e-3;
  int max_outer = 50;
  bool timing = false;
  int pso_swarm = 20;
  int pso_iters = 30;
};

AoOptions ao_options(const Common& c) {
  AoOptions o;
  o.eps = c.eps;
  o.max_outer = c.max_outer;
  return o;
}

PsoOptions pso_options(const Common& c) {
  PsoOptions p;
  p.swarm = c.pso_swarm;
  p.iters = c.pso_iters;
  p.workers = worker_count();
  return p;
}

std::string scheme_list() {
  std::string s;
  for (const auto& [name, sc] : scheme_names()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

int cmd_run(const Common& c, const std::string& scheme, const std::string& out) {
  const auto sc = parse_scheme(scheme);
  if (!sc) {
    std::cerr << "error: unknown scheme '" << scheme << "' (expected one of: " << scheme_list() << ")\n";
    return kUsage;
  }
  const Scenario base = load_scenario(c.scenario);
  const Scenario s = scheme_scenario(base, *sc);
  const auto t0 = std::chrono::steady_clock::now();
  const AoState start = scheme_initial_state(s, *sc, c.seed, pso_options(c));
  const ObjectiveBreakdown initial = evaluate_objective(s, start.trajectory, start.tx, start.rx, start.bf);
  const AoState st = run_ao(s, start, scheme_options(*sc, ao_options(c), c.seed));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run(out, s, st, RunInfo{scheme, c.seed, c.eps, c.max_outer}, initial);
  double prev = initial.weighted;
  for (const IterationRecord& r : st.trace) {
    if (r.weighted < prev - 1e-4)
      std::cerr << "warning: objective dropped by " << prev - r.weighted << " at iteration " << r.iteration << "\n";
    prev = r.weighted;
  }
  const IterationRecord* last = st.trace.empty() ? nullptr : &st.trace.back();
  std::cout << scheme << ": objective " << (last ? last->weighted : initial.weighted) << " after " << st.iteration
            << " iterations (" << (st.converged ? "converged" : "iteration cap") << ")";
  if (c.timing) std::cout << ", " << secs << " s";
  std::cout << "\n";
  return 0;
}

bool set_axis(nlohmann::json& j, const std::string& axis, double v) {
  if (axis == "power") j["radio"]["pmax_dbm"] = v;
  else if (axis == "antennas") {
    j["arrays"]["n_tx"] = static_cast<int>(std::lround(v));
    j["arrays"]["n_rx"] = static_cast<int>(std::lround(v));
  } else if (axis == "altitude") j["geometry"]["altitude_m"] = v;
  else if (axis == "weight") {
    j["objective"]["xi_c"] = v;
    j["objective"].erase("xi_s");
  } else return false;
  return true;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double x = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    v.push_back(x);
  }
  return v;
}

int cmd_sweep(const Common& c, const std::string& axis, const std::string& values, const std::string& schemes,
              const std::string& out) {
  std::vector<double> vals;
  try {
    vals = parse_values(values);
  } catch (const std::exception& e) {
    std::cerr << "error: --values: " << e.what() << "\n";
    return kUsage;
  }
  if (vals.empty()) {
    std::cerr << "error: --values is empty\n";
    return kUsage;
  }
  for (std::size_t k = 1; k < vals.size(); ++k) {
    if (!(vals[k] > vals[k - 1])) {
      std::cerr << "error: --values must be strictly increasing\n";
      return kUsage;
    }
  }
  std::vector<Scheme> list;
  std::stringstream ss(schemes);
  for (std::string name; std::getline(ss, name, ',');) {
    const auto sc = parse_scheme(name);
    if (!sc) {
      std::cerr << "error: unknown scheme '" << name << "' (expected one of: " << scheme_list() << ")\n";
      return kUsage;
    }
    list.push_back(*sc);
  }
  const Scenario base = load_scenario(c.scenario);
  nlohmann::json probe = scenario_to_json(base);
  if (!set_axis(probe, axis, vals[0])) {
    std::cerr << "error: unknown axis '" << axis << "' (expected power, antennas, altitude or weight)\n";
    return kUsage;
  }
  std::vector<SweepRow> rows;
  for (Scheme sc : list)
    for (double v : vals) rows.push_back(SweepRow{scheme_name(sc), v});
  PsoOptions po = pso_options(c);
  po.workers = 1;
  parallel_for(static_cast<int>(rows.size()), worker_count(), [&](int k) {
    SweepRow& r = rows[k];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      nlohmann::json j = scenario_to_json(base);
      set_axis(j, axis, r.value);
      const Scenario s = scenario_from_json(j);
      const Scheme sc = *parse_scheme(r.scheme);
      const AoState st = run_scheme(s, sc, c.seed, ao_options(c), po);
      const Scenario used = scheme_scenario(s, sc);
      const ObjectiveBreakdown o = evaluate_objective(used, st.trajectory, st.tx, st.rx, st.bf);
      r.objective = o.weighted;
      r.sum_rate = o.sum_rate;
      r.total_inv_crb = o.total_inv_crb;
      r.total_crb = total_crb(o);
      r.iterations = st.iteration;
      r.converged = st.converged;
    } catch (const std::exception& e) {
      r.status = std::string("error: ") + e.what();
    }
    if (c.timing) r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });
  write_sweep_csv(fs::path(out) / ("sweep_" + axis + ".csv"), rows);
  int failed = 0;
  for (const SweepRow& r : rows) failed += r.status == "ok" ? 0 : 1;
  std::cout << "sweep " << axis << ": " << rows.size() << " points, " << failed << " failed\n";
  return 0;
}

int cmd_beampattern(const std::string& run_dir, int slot, const std::string& grid, const std::string& out) {
  const RunArtifacts a = load_run(run_dir);
  const Scenario& s = a.scenario;
  if (slot < 1 || slot > static_cast<int>(a.state.bf.size())) {
    std::cerr << "error: slot " << slot << " not in run (1.." << a.state.bf.size() << ")\n";
    return 1;
  }
  std::vector<double> g;
  try {
    g = parse_values(grid);
  } catch (const std::exception& e) {
    std::cerr << "error: --grid: " << e.what() << "\n";
    return kUsage;
  }
  if (g.size() != 6 || g[4] < 1 || g[5] < 1) {
    std::cerr << "error: --grid expects x0,x1,y0,y1,nx,ny\n";
    return kUsage;
  }
  const int n = slot - 1;
  const fs::path path = out.empty() ? fs::path(run_dir) / ("beampattern_slot" + std::to_string(slot) + ".csv") : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_beampattern_csv(path.string(), s, a.state.tx[s.interval_index(n)], a.state.bf[n], a.state.trajectory.points[n],
                        g[0], g[1], g[2], g[3], static_cast<int>(g[4]), static_cast<int>(g[5]));
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_verify(const Common& c, int trials) {
  const Scenario s = load_scenario(c.scenario);
  int failures = 0;
  auto line = [&](const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
    failures += ok ? 0 : 1;
  };
  const oracle::BoundReport bounds = oracle::surrogate_bound_sweep(s, trials, c.seed);
  for (const oracle::BoundFamily& f : bounds.families) {
    std::ostringstream d;
    d << f.violations << "/" << f.trials << " violations, worst " << f.worst_violation << ", tangency "
      << f.worst_tangency;
    line(f.name, f.violations == 0 && f.worst_tangency <= 1e-9, d.str());
  }
  const oracle::SignReport signs = oracle::sign_structure_sweep(trials, c.seed + 1, s.wavelength);
  {
    std::ostringstream d;
    d << signs.failures << "/" << signs.trials << " wrong-signed, worst " << signs.worst;
    line("curvature signs", signs.failures == 0, d.str());
  }
  std::mt19937_64 rng(c.seed + 2);
  std::uniform_real_distribution<double> ang(0.1, 1.45), dist(120.0, 600.0);
  double fd_trace = 0.0, fd_closed = 0.0;
  for (int t = 0; t < 100; ++t) {
    ArrayLayout tx, rx;
    tx.kind = ArrayKind::transmit;
    rx.kind = ArrayKind::receive;
    tx.coords = oracle::detail::random_positions(s.n_tx, s.d_min, s.segment_len, rng);
    rx.coords = oracle::detail::random_positions(s.n_rx, s.d_min, s.segment_len, rng);
    const double th = ang(rng), d = dist(rng);
    const BeamformingSolution b = oracle::detail::random_beams(s.n_tx, s.num_users(), s.pmax, rng);
    fd_trace = std::max(fd_trace, std::abs(oracle::fim_numeric_crb(s, tx, rx, th, d, b).crb /
                                               crb_trace_form(s, tx, rx, th, d, b) - 1.0));
    BeamformingSolution r1 = zero_beamforming(s.n_tx, 1);
    r1.w_mats[0] = b.w_mats[0] * (s.pmax / b.w_mats[0].trace().real());
    fd_closed = std::max(fd_closed, std::abs(oracle::fim_numeric_crb(s, tx, rx, th, d, r1).crb *
                                                 inv_crb_closed(s, tx, rx, th, d, r1) - 1.0));
  }
  auto sci = [](double v) {
    std::ostringstream o;
    o << "worst relative error " << v;
    return o.str();
  };
  line("finite-difference CRB vs Fisher form", fd_trace <= 1e-5, sci(fd_trace));
  line("finite-difference CRB vs closed form (rank-one)", fd_closed <= 1e-5, sci(fd_closed));
  const oracle::RateAccuracy acc = oracle::rate_approximation_sweep(s, 20, 100000, c.seed + 3);
  {
    std::ostringstream d;
    d << acc.over << "/" << acc.cases << " cases above 10%, worst " << acc.worst << " at rate " << acc.worst_rate;
    line("approximate vs Monte-Carlo rate", acc.over == 0, d.str());
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV ISAC with fluid-antenna arrays: joint beamforming, array positions and trajectory"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* sub, bool needs_run) {
    sub->add_option("--scenario", c.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", c.seed, "random seed");
    if (!needs_run) return;
    sub->add_option("--eps", c.eps, "stop when an outer iteration gains less than this");
    sub->add_option("--max-outer", c.max_outer, "outer iteration cap")->check(CLI::PositiveNumber);
    sub->add_flag("--timing", c.timing, "report wall time (sweep CSVs get a runtime column)");
    sub->add_option("--pso-swarm", c.pso_swarm, "PSO swarm size")->check(CLI::PositiveNumber);
    sub->add_option("--pso-iters", c.pso_iters, "PSO iterations")->check(CLI::NonNegativeNumber);
  };

  std::string scheme = "proposed", out = "out", axis, values, schemes = "proposed,fpa,rpa,pso";
  auto* run = app.add_subcommand("run", "optimize one scheme and write trace, trajectory, metrics and run.json");
  add_common(run, true);
  run->add_option("--scheme", scheme, "one of: " + scheme_list());
  run->add_option("--out", out, "output directory");

  auto* sweep = app.add_subcommand("sweep", "final objective per scheme along one parameter axis");
  add_common(sweep, true);
  sweep->add_option("--axis", axis, "power (dBm), antennas (n_tx = n_rx), altitude (m) or weight (xi_c)")->required();
  sweep->add_option("--values", values, "comma-separated increasing values")->required();
  sweep->add_option("--schemes", schemes, "comma-separated schemes");
  sweep->add_option("--out", out, "output directory");

  std::string run_dir, grid = "-400,400,-400,400,81,81", bp_out;
  int slot = 1;
  auto* bp = app.add_subcommand("beampattern", "transmit gain over a ground grid for one slot of a finished run");
  bp->add_option("--run", run_dir, "directory written by `run`")->required()->check(CLI::ExistingDirectory);
  bp->add_option("--slot", slot, "slot index, 1-based");
  bp->add_option("--grid", grid, "x0,x1,y0,y1,nx,ny in metres");
  bp->add_option("--out", bp_out, "CSV path (default <run>/beampattern_slot<k>.csv)");

  int trials = 1000;
  auto* verify = app.add_subcommand("verify", "run the oracle suite; nonzero exit on any violation");
  add_common(verify, false);
  verify->add_option("--trials", trials, "trials per bound family")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  try {
    if (*run) return cmd_run(c, scheme, out);
    if (*sweep) return cmd_sweep(c, axis, values, schemes, out);
    if (*bp) return cmd_beampattern(run_dir, slot, grid, bp_out);
    if (*verify) return cmd_verify(c, trials);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
