#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "faisac/ao.hpp"

namespace faisac {

// Fixed-format number for CSV cells; identical inputs give identical bytes.
inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

inline double total_crb(const ObjectiveBreakdown& o) {
  double t = 0.0;
  for (double v : o.inv_crb) t += v > 0.0 ? 1.0 / v : std::numeric_limits<double>::infinity();
  return t;
}

// iteration,objective,sum_rate,total_inv_crb; iteration 0 is the initial state.
inline void write_trace_csv(const std::filesystem::path& p, const AoState& st, const ObjectiveBreakdown& initial) {
  std::ofstream out = open_out(p);
  out << "iteration,objective,sum_rate,total_inv_crb\n";
  out << 0 << ',' << csv_num(initial.weighted) << ',' << csv_num(initial.sum_rate) << ','
      << csv_num(initial.total_inv_crb) << '\n';
  for (const IterationRecord& r : st.trace) {
    out << r.iteration << ',' << csv_num(r.weighted) << ',' << csv_num(r.sum_rate) << ','
        << csv_num(r.total_inv_crb) << '\n';
  }
}

inline void write_trajectory_csv(const std::filesystem::path& p, const Trajectory& t) {
  std::ofstream out = open_out(p);
  out << "slot,x_m,y_m\n";
  for (std::size_t n = 0; n < t.points.size(); ++n)
    out << n + 1 << ',' << csv_num(t.points[n].x()) << ',' << csv_num(t.points[n].y()) << '\n';
}

// slot,interval,x_m,y_m,rate_u1..rate_uM,sum_rate,inv_crb,crb,weighted
inline void write_metrics_csv(const std::filesystem::path& p, const Scenario& s, const AoState& st) {
  const ObjectiveBreakdown o = evaluate_objective(s, st.trajectory, st.tx, st.rx, st.bf);
  std::ofstream out = open_out(p);
  out << "slot,interval,x_m,y_m";
  for (int m = 0; m < s.num_users(); ++m) out << ",rate_u" << m + 1;
  out << ",sum_rate,inv_crb,crb,weighted\n";
  for (int n = 0; n < s.slots; ++n) {
    const Vec2& q = st.trajectory.points[n];
    out << n + 1 << ',' << s.interval_index(n) + 1 << ',' << csv_num(q.x()) << ',' << csv_num(q.y());
    for (double r : o.rates[n]) out << ',' << csv_num(r);
    const double inv = o.inv_crb[n];
    const double w = s.xi_c * o.slot_sum_rate(n) + s.xi_s * s.inv_crb_scale * inv;
    out << ',' << csv_num(o.slot_sum_rate(n)) << ',' << csv_num(inv) << ','
        << csv_num(inv > 0.0 ? 1.0 / inv : std::numeric_limits<double>::infinity()) << ',' << csv_num(w) << '\n';
  }
}

inline nlohmann::json matrix_json(const Eigen::MatrixXcd& m) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) {
      rr.push_back(m(i, j).real());
      ii.push_back(m(i, j).imag());
    }
    re.push_back(rr);
    im.push_back(ii);
  }
  return {{"re", re}, {"im", im}};
}

inline Eigen::MatrixXcd matrix_from_json(const nlohmann::json& j) {
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  const int n = static_cast<int>(re.size());
  const int k = n > 0 ? static_cast<int>(re[0].size()) : 0;
  Eigen::MatrixXcd m(n, k);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < k; ++b) m(a, b) = cd(re[a][b].get<double>(), im[a][b].get<double>());
  return m;
}

struct RunInfo {
  std::string scheme;
  std::uint64_t seed = 0;
  double eps = 1e-3;
  int max_outer = 50;
};

inline nlohmann::json run_json(const Scenario& s, const AoState& st, const RunInfo& info,
                               const ObjectiveBreakdown& initial) {
  const ObjectiveBreakdown o = evaluate_objective(s, st.trajectory, st.tx, st.rx, st.bf);
  nlohmann::json j;
  j["scheme"] = info.scheme;
  j["seed"] = info.seed;
  j["eps"] = info.eps;
  j["max_outer"] = info.max_outer;
  j["iterations"] = st.iteration;
  j["converged"] = st.converged;
  j["initial"] = {{"objective", initial.weighted}, {"sum_rate", initial.sum_rate},
                  {"total_inv_crb", initial.total_inv_crb}};
  j["final"] = {{"objective", o.weighted},
                {"sum_rate", o.sum_rate},
                {"total_inv_crb", o.total_inv_crb},
                {"total_crb", total_crb(o)}};
  j["scenario"] = scenario_to_json(s);
  nlohmann::json traj = nlohmann::json::array();
  for (const Vec2& q : st.trajectory.points) traj.push_back({q.x(), q.y()});
  j["trajectory"] = traj;
  auto layouts = [](const std::vector<ArrayLayout>& ls) {
    nlohmann::json a = nlohmann::json::array();
    for (const ArrayLayout& l : ls) a.push_back(std::vector<double>(l.coords.data(), l.coords.data() + l.coords.size()));
    return a;
  };
  j["tx_layouts_m"] = layouts(st.tx);
  j["rx_layouts_m"] = layouts(st.rx);
  nlohmann::json bf = nlohmann::json::array();
  for (const BeamformingSolution& b : st.bf) {
    nlohmann::json w = nlohmann::json::array();
    for (const auto& m : b.w_mats) w.push_back(matrix_json(m));
    bf.push_back({{"w", w}, {"r0", matrix_json(b.r0)}, {"rank_one_ratio", b.rank_one_ratio}});
  }
  j["beamforming"] = bf;
  nlohmann::json diag = nlohmann::json::array();
  for (const IterationRecord& r : st.trace) {
    diag.push_back({{"iteration", r.iteration},
                    {"after_beamforming", r.after_beamforming},
                    {"after_tx", r.after_tx},
                    {"after_rx", r.after_rx},
                    {"after_trajectory", r.after_trajectory},
                    {"min_rank_one_ratio", r.min_rank_one_ratio},
                    {"fallbacks", r.fallbacks},
                    {"rejected_steps", r.rejected_steps},
                    {"trajectory_backtracks", r.trajectory_backtracks},
                    {"solver_warnings", r.solver_warnings},
                    {"newton_steps", r.newton_steps}});
  }
  j["diagnostics"] = diag;
  return j;
}

struct RunArtifacts {
  Scenario scenario;
  AoState state;
  std::string scheme;
};

inline RunArtifacts load_run(const std::filesystem::path& dir) {
  std::ifstream in(dir / "run.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "run.json").string());
  nlohmann::json j;
  in >> j;
  RunArtifacts r{scenario_from_json(j.at("scenario")), AoState{}, j.at("scheme").get<std::string>()};
  for (const auto& p : j.at("trajectory")) r.state.trajectory.points.emplace_back(p[0].get<double>(), p[1].get<double>());
  auto layouts = [](const nlohmann::json& a, ArrayKind kind) {
    std::vector<ArrayLayout> out;
    for (const auto& l : a) {
      const std::vector<double> v = l.get<std::vector<double>>();
      ArrayLayout x;
      x.kind = kind;
      x.coords = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      out.push_back(x);
    }
    return out;
  };
  r.state.tx = layouts(j.at("tx_layouts_m"), ArrayKind::transmit);
  r.state.rx = layouts(j.at("rx_layouts_m"), ArrayKind::receive);
  for (const auto& b : j.at("beamforming")) {
    BeamformingSolution s;
    for (const auto& w : b.at("w")) s.w_mats.push_back(matrix_from_json(w));
    s.r0 = matrix_from_json(b.at("r0"));
    r.state.bf.push_back(s);
  }
  r.state.iteration = j.at("iterations").get<int>();
  r.state.converged = j.at("converged").get<bool>();
  return r;
}

// Writes trace.csv, trajectory.csv, metrics.csv and run.json into `dir`.
inline void write_run(const std::filesystem::path& dir, const Scenario& s, const AoState& st, const RunInfo& info,
                      const ObjectiveBreakdown& initial) {
  write_trace_csv(dir / "trace.csv", st, initial);
  write_trajectory_csv(dir / "trajectory.csv", st.trajectory);
  write_metrics_csv(dir / "metrics.csv", s, st);
  std::ofstream out = open_out(dir / "run.json");
  out << run_json(s, st, info, initial).dump(2) << '\n';
}

struct SweepRow {
  std::string scheme;
  double value = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double sum_rate = std::numeric_limits<double>::quiet_NaN();
  double total_inv_crb = std::numeric_limits<double>::quiet_NaN();
  double total_crb = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
  double runtime_s = -1.0;  // negative when timing is off
  std::string status = "ok";
};

// scheme,value,objective,sum_rate,total_inv_crb,total_crb,iterations,converged,runtime_s,status
inline void write_sweep_csv(const std::filesystem::path& p, const std::vector<SweepRow>& rows) {
  std::ofstream out = open_out(p);
  out << "scheme,value,objective,sum_rate,total_inv_crb,total_crb,iterations,converged,runtime_s,status\n";
  for (const SweepRow& r : rows) {
    std::string status = r.status;
    for (char& c : status)
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    out << r.scheme << ',' << csv_num(r.value) << ',' << csv_num(r.objective) << ',' << csv_num(r.sum_rate) << ','
        << csv_num(r.total_inv_crb) << ',' << csv_num(r.total_crb) << ',' << r.iterations << ','
        << (r.converged ? 1 : 0) << ',' << (r.runtime_s < 0.0 ? std::string("NA") : csv_num(r.runtime_s)) << ','
        << status << '\n';
  }
}

}  // namespace faisac
