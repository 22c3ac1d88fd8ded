#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace faisac {

using Vec2 = Eigen::Vector2d;

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

// Values as written in a scenario file: dB/dBm quantities and lengths in wavelengths.
struct ScenarioConfig {
  std::vector<Vec2> users;
  Vec2 target{0.0, 0.0};
  Vec2 uav_start{0.0, 0.0};
  Vec2 uav_end{0.0, 0.0};
  double altitude_m = 100.0;

  double mission_s = 45.0;
  int slots = 20;
  int intervals = 5;

  int n_tx = 12;
  int n_rx = 12;
  double segment_wavelengths = 20.0;
  double dmin_wavelengths = 0.5;

  double wavelength_m = 0.0107;
  double h0_db = -60.0;
  double noise_user_dbm = -90.0;
  double noise_radar_dbm = -90.0;
  double pmax_dbm = 30.0;
  double rcs_m2 = 1.0;
  int frame_len = 200;

  double rician_c1 = 1.0;
  double kappa_zenith = 100.0;

  double xi_c = 0.5;
  std::optional<double> xi_s;
  // Multiplies the inverse CRB (rad^-2) inside the weighted objective; 1e-12 reads it in urad^-2.
  double inv_crb_scale = 1e-14;

  double vmax_mps = 20.0;

  bool operator==(const ScenarioConfig&) const = default;
};

enum class ArrayKind { transmit, receive };

struct ArrayLayout {
  Eigen::VectorXd coords;
  ArrayKind kind = ArrayKind::transmit;

  int size() const { return static_cast<int>(coords.size()); }
  bool operator==(const ArrayLayout& o) const {
    return kind == o.kind && coords.size() == o.coords.size() && coords == o.coords;
  }
};

struct Trajectory {
  std::vector<Vec2> points;

  int size() const { return static_cast<int>(points.size()); }
};

class Scenario {
 public:
  ScenarioConfig config;

  std::vector<Vec2> users;
  Vec2 target;
  Vec2 uav_start;
  Vec2 uav_end;
  double altitude = 0.0;

  double mission = 0.0;
  int slots = 0;
  int intervals = 0;
  int mu = 0;
  double slot_duration = 0.0;

  int n_tx = 0;
  int n_rx = 0;
  double segment_len = 0.0;
  double d_min = 0.0;

  double wavelength = 0.0;
  double h0 = 0.0;
  double noise_user = 0.0;
  double noise_radar = 0.0;
  double pmax = 0.0;
  double rcs = 0.0;
  int frame_len = 0;

  double rician_c1 = 0.0;
  double rician_c2 = 0.0;

  double xi_c = 0.0;
  double xi_s = 0.0;
  double inv_crb_scale = 1.0;
  double vmax = 0.0;

  static Scenario from_config(const ScenarioConfig& c);

  int num_users() const { return static_cast<int>(users.size()); }
  double max_step() const { return vmax * slot_duration; }

  // 1-based slot -> 1-based interval.
  int interval_of(int slot) const {
    if (slot < 1 || slot > slots) {
      throw std::out_of_range("slot " + std::to_string(slot) + " outside 1.." + std::to_string(slots));
    }
    return (slot - 1) / mu + 1;
  }
  int interval_index(int slot0) const { return slot0 / mu; }

  bool operator==(const Scenario& o) const { return config == o.config; }
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ScenarioError("scenario invariant violated: " + what);
}

inline bool finite_point(const Vec2& p) { return std::isfinite(p.x()) && std::isfinite(p.y()); }

}  // namespace detail

inline Scenario Scenario::from_config(const ScenarioConfig& c) {
  using detail::require;
  require(!c.users.empty(), "at least one user (M >= 1)");
  for (const auto& u : c.users) require(detail::finite_point(u), "user coordinates finite");
  require(detail::finite_point(c.target) && detail::finite_point(c.uav_start) && detail::finite_point(c.uav_end),
          "target and endpoint coordinates finite");
  require(c.altitude_m > 0.0, "altitude_m > 0");
  require(c.mission_s > 0.0, "mission_s > 0");
  require(c.slots >= 2, "slots >= 2");
  require(c.intervals >= 1, "intervals >= 1");
  require(c.slots % c.intervals == 0,
          "slots divisible by intervals (N=" + std::to_string(c.slots) + ", I=" + std::to_string(c.intervals) + ")");
  require(c.n_tx >= 1, "n_tx >= 1");
  require(c.n_rx >= 2, "n_rx >= 2");
  require(c.segment_wavelengths > 0.0, "segment_wavelengths > 0");
  require(c.dmin_wavelengths > 0.0, "dmin_wavelengths > 0");
  require(c.wavelength_m > 0.0, "wavelength_m > 0");
  require(std::isfinite(c.h0_db) && std::isfinite(c.noise_user_dbm) && std::isfinite(c.noise_radar_dbm) &&
              std::isfinite(c.pmax_dbm),
          "dB quantities finite");
  require(c.rcs_m2 > 0.0, "rcs_m2 > 0");
  require(c.frame_len >= 1, "frame_len >= 1");
  require(c.rician_c1 >= 0.0, "rician c1 >= 0");
  require(c.kappa_zenith > 0.0, "kappa_zenith > 0");
  require(c.xi_c >= 0.0 && c.xi_c <= 1.0, "xi_c in [0,1]");
  const double xs = c.xi_s.value_or(1.0 - c.xi_c);
  require(xs >= 0.0 && xs <= 1.0, "xi_s in [0,1]");
  {
    std::ostringstream msg;
    msg << "xi_c + xi_s = 1 (got " << c.xi_c << " + " << xs << ")";
    require(std::abs(c.xi_c + xs - 1.0) <= 1e-12, msg.str());
  }
  require(c.inv_crb_scale > 0.0, "inv_crb_scale > 0");
  require(c.vmax_mps > 0.0, "vmax_mps > 0");
  require(c.n_tx == 1 || (c.n_tx - 1) * c.dmin_wavelengths <= c.segment_wavelengths * (1.0 + 1e-12),
          "(n_tx - 1) * d_min <= D_FA");
  require((c.n_rx - 1) * c.dmin_wavelengths <= c.segment_wavelengths * (1.0 + 1e-12), "(n_rx - 1) * d_min <= D_FA");

  const double tau = c.mission_s / c.slots;
  const double reach = (c.slots - 1) * c.vmax_mps * tau;
  require((c.uav_end - c.uav_start).norm() <= reach * (1.0 + 1e-12),
          "endpoints reachable: |q_F - q_I| <= (N - 1) * vmax * tau");

  Scenario s;
  s.config = c;
  s.users = c.users;
  s.target = c.target;
  s.uav_start = c.uav_start;
  s.uav_end = c.uav_end;
  s.altitude = c.altitude_m;
  s.mission = c.mission_s;
  s.slots = c.slots;
  s.intervals = c.intervals;
  s.mu = c.slots / c.intervals;
  s.slot_duration = tau;
  s.n_tx = c.n_tx;
  s.n_rx = c.n_rx;
  s.wavelength = c.wavelength_m;
  s.segment_len = c.segment_wavelengths * c.wavelength_m;
  s.d_min = c.dmin_wavelengths * c.wavelength_m;
  s.h0 = db_to_linear(c.h0_db);
  s.noise_user = dbm_to_watts(c.noise_user_dbm);
  s.noise_radar = dbm_to_watts(c.noise_radar_dbm);
  s.pmax = dbm_to_watts(c.pmax_dbm);
  s.rcs = c.rcs_m2;
  s.frame_len = c.frame_len;
  s.rician_c1 = c.rician_c1;
  // kappa grows from c1 at grazing to kappa_zenith * c1 overhead.
  s.rician_c2 = (2.0 / M_PI) * std::log(c.kappa_zenith);
  s.xi_c = c.xi_c;
  s.xi_s = xs;
  s.inv_crb_scale = c.inv_crb_scale;
  s.vmax = c.vmax_mps;
  return s;
}

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ScenarioError("scenario: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ScenarioError("scenario: unknown key '" + where + "." + it.key() + "'");
  }
}

inline Vec2 read_point(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ScenarioError("scenario: '" + where + "' must be [x, y]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ScenarioError("scenario: '" + where + "." + key + "' has the wrong type");
  }
}

inline nlohmann::json point_json(const Vec2& p) { return nlohmann::json::array({p.x(), p.y()}); }

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_opt;
  check_keys(j, "<root>", {"geometry", "time", "arrays", "radio", "rician", "objective", "limits"});
  ScenarioConfig c;

  if (!j.contains("geometry")) throw ScenarioError("scenario: missing 'geometry'");
  const auto& g = j.at("geometry");
  check_keys(g, "geometry", {"users", "target", "uav_start", "uav_end", "altitude_m"});
  for (const char* key : {"users", "target", "uav_start", "uav_end"}) {
    if (!g.contains(key)) throw ScenarioError(std::string("scenario: missing 'geometry.") + key + "'");
  }
  if (!g.at("users").is_array()) throw ScenarioError("scenario: 'geometry.users' must be a list");
  for (std::size_t k = 0; k < g.at("users").size(); ++k) {
    c.users.push_back(detail::read_point(g.at("users")[k], "geometry.users[" + std::to_string(k) + "]"));
  }
  c.target = detail::read_point(g.at("target"), "geometry.target");
  c.uav_start = detail::read_point(g.at("uav_start"), "geometry.uav_start");
  c.uav_end = detail::read_point(g.at("uav_end"), "geometry.uav_end");
  read_opt(g, "altitude_m", c.altitude_m, "geometry");

  if (j.contains("time")) {
    const auto& t = j.at("time");
    check_keys(t, "time", {"mission_s", "slots", "intervals"});
    read_opt(t, "mission_s", c.mission_s, "time");
    read_opt(t, "slots", c.slots, "time");
    read_opt(t, "intervals", c.intervals, "time");
  }
  if (j.contains("arrays")) {
    const auto& a = j.at("arrays");
    check_keys(a, "arrays", {"n_tx", "n_rx", "segment_wavelengths", "dmin_wavelengths"});
    read_opt(a, "n_tx", c.n_tx, "arrays");
    read_opt(a, "n_rx", c.n_rx, "arrays");
    read_opt(a, "segment_wavelengths", c.segment_wavelengths, "arrays");
    read_opt(a, "dmin_wavelengths", c.dmin_wavelengths, "arrays");
  }
  if (j.contains("radio")) {
    const auto& r = j.at("radio");
    check_keys(r, "radio",
               {"wavelength_m", "h0_db", "noise_user_dbm", "noise_radar_dbm", "pmax_dbm", "rcs_m2", "frame_len"});
    read_opt(r, "wavelength_m", c.wavelength_m, "radio");
    read_opt(r, "h0_db", c.h0_db, "radio");
    read_opt(r, "noise_user_dbm", c.noise_user_dbm, "radio");
    read_opt(r, "noise_radar_dbm", c.noise_radar_dbm, "radio");
    read_opt(r, "pmax_dbm", c.pmax_dbm, "radio");
    read_opt(r, "rcs_m2", c.rcs_m2, "radio");
    read_opt(r, "frame_len", c.frame_len, "radio");
  }
  if (j.contains("rician")) {
    const auto& r = j.at("rician");
    check_keys(r, "rician", {"c1", "kappa_zenith"});
    read_opt(r, "c1", c.rician_c1, "rician");
    read_opt(r, "kappa_zenith", c.kappa_zenith, "rician");
  }
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    check_keys(o, "objective", {"xi_c", "xi_s", "inv_crb_scale"});
    read_opt(o, "xi_c", c.xi_c, "objective");
    if (o.contains("xi_s")) {
      double xs = 0.0;
      read_opt(o, "xi_s", xs, "objective");
      c.xi_s = xs;
    }
    read_opt(o, "inv_crb_scale", c.inv_crb_scale, "objective");
  }
  if (j.contains("limits")) {
    const auto& l = j.at("limits");
    check_keys(l, "limits", {"vmax_mps"});
    read_opt(l, "vmax_mps", c.vmax_mps, "limits");
  }
  return Scenario::from_config(c);
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  const ScenarioConfig& c = s.config;
  nlohmann::json users = nlohmann::json::array();
  for (const auto& u : c.users) users.push_back(detail::point_json(u));
  nlohmann::json objective = {{"xi_c", c.xi_c}, {"inv_crb_scale", c.inv_crb_scale}};
  if (c.xi_s) objective["xi_s"] = *c.xi_s;
  return {
      {"geometry",
       {{"users", users},
        {"target", detail::point_json(c.target)},
        {"uav_start", detail::point_json(c.uav_start)},
        {"uav_end", detail::point_json(c.uav_end)},
        {"altitude_m", c.altitude_m}}},
      {"time", {{"mission_s", c.mission_s}, {"slots", c.slots}, {"intervals", c.intervals}}},
      {"arrays",
       {{"n_tx", c.n_tx},
        {"n_rx", c.n_rx},
        {"segment_wavelengths", c.segment_wavelengths},
        {"dmin_wavelengths", c.dmin_wavelengths}}},
      {"radio",
       {{"wavelength_m", c.wavelength_m},
        {"h0_db", c.h0_db},
        {"noise_user_dbm", c.noise_user_dbm},
        {"noise_radar_dbm", c.noise_radar_dbm},
        {"pmax_dbm", c.pmax_dbm},
        {"rcs_m2", c.rcs_m2},
        {"frame_len", c.frame_len}}},
      {"rician", {{"c1", c.rician_c1}, {"kappa_zenith", c.kappa_zenith}}},
      {"objective", objective},
      {"limits", {{"vmax_mps", c.vmax_mps}}},
  };
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError("scenario parse error in " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("cannot write scenario file: " + path);
  out << scenario_to_json(s).dump(2) << "\n";
}

// ---- layouts ----

inline bool layout_feasible(const ArrayLayout& l, double d_min, double d_fa, double tol = 1e-9) {
  const auto& x = l.coords;
  if (x.size() == 0) return false;
  for (int k = 0; k < x.size(); ++k) {
    if (!std::isfinite(x[k]) || x[k] < -tol || x[k] > d_fa + tol) return false;
    if (k > 0 && x[k] - x[k - 1] < d_min - tol) return false;
  }
  return true;
}

inline void check_layout(const ArrayLayout& l, double d_min, double d_fa, double tol = 1e-9) {
  if (!layout_feasible(l, d_min, d_fa, tol)) {
    throw ScenarioError("array layout violates 0 <= x_1, x_k - x_{k-1} >= d_min, x_n <= D_FA");
  }
}

inline ArrayLayout uniform_layout(int n, double d_fa, double d_min, ArrayKind kind) {
  ArrayLayout l;
  l.kind = kind;
  l.coords = Eigen::VectorXd::Zero(n);
  if (n == 1) return l;
  const double spacing = std::max(d_min, d_fa / (n - 1));
  for (int k = 0; k < n; ++k) l.coords[k] = std::min(k * spacing, d_fa);
  l.coords[n - 1] = std::min((n - 1) * spacing, d_fa);
  return l;
}

// ---- trajectories ----

inline Trajectory straight_line(const Scenario& s) {
  Trajectory t;
  t.points.resize(s.slots);
  for (int n = 0; n < s.slots; ++n) {
    const double a = static_cast<double>(n) / (s.slots - 1);
    t.points[n] = (1.0 - a) * s.uav_start + a * s.uav_end;
  }
  t.points.front() = s.uav_start;
  t.points.back() = s.uav_end;
  return t;
}

inline bool trajectory_feasible(const Scenario& s, const Trajectory& t, double rel_tol = 1e-9) {
  if (t.size() != s.slots) return false;
  if ((t.points.front() - s.uav_start).norm() > 1e-9 || (t.points.back() - s.uav_end).norm() > 1e-9) return false;
  for (int n = 1; n < t.size(); ++n) {
    if ((t.points[n] - t.points[n - 1]).norm() > s.max_step() * (1.0 + rel_tol)) return false;
  }
  return true;
}

}  // namespace faisac
