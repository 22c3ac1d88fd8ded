#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "faisac/channel.hpp"
#include "faisac/scenario.hpp"

namespace faisac {

class DegenerateArrayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularFisherError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-slot transmit design: user covariances W_m and the dedicated sensing covariance R_0.
struct BeamformingSolution {
  std::vector<Eigen::MatrixXcd> w_mats;
  Eigen::MatrixXcd r0;
  std::vector<Eigen::VectorXcd> w_vecs;
  std::vector<double> rank_one_ratio;

  double total_power() const {
    double p = r0.trace().real();
    for (const auto& w : w_mats) p += w.trace().real();
    return p;
  }
};

inline BeamformingSolution zero_beamforming(int n_tx, int users) {
  BeamformingSolution b;
  b.w_mats.assign(users, Eigen::MatrixXcd::Zero(n_tx, n_tx));
  b.r0 = Eigen::MatrixXcd::Zero(n_tx, n_tx);
  return b;
}

inline Eigen::MatrixXcd tx_covariance(const BeamformingSolution& b) {
  Eigen::MatrixXcd r = b.r0;
  for (const auto& w : b.w_mats) r += w;
  return r;
}

inline double quad_form(const Eigen::VectorXcd& v, const Eigen::MatrixXcd& m) { return v.dot(m * v).real(); }

// Expected useful power and expected interference-plus-noise for user m.
struct SignalPowers {
  double signal = 0.0;
  double interference = 0.0;
};

inline double expected_gain(const ChannelStats& c, const Eigen::MatrixXcd& w) {
  return c.zeta_los * quad_form(c.h_bar, w) + c.zeta_nlos * w.trace().real();
}

inline SignalPowers signal_powers(const ChannelStats& c, const BeamformingSolution& b, int m, double noise) {
  SignalPowers p;
  p.signal = expected_gain(c, b.w_mats[m]);
  p.interference = expected_gain(c, b.r0) + noise;
  for (int i = 0; i < static_cast<int>(b.w_mats.size()); ++i) {
    if (i != m) p.interference += expected_gain(c, b.w_mats[i]);
  }
  return p;
}

inline double approx_rate(const ChannelStats& c, const BeamformingSolution& b, int m, double noise) {
  const SignalPowers p = signal_powers(c, b, m, noise);
  return std::log2(1.0 + p.signal / p.interference);
}

inline double total_sum_of_squares(const Eigen::VectorXd& y) {
  if (y.size() == 0) return 0.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum();
}

// Scale alpha * d_T^2 of the inverse CRB (independent of the target distance).
inline double crb_gain(const Scenario& s, double theta_t) {
  const double k0 = 2.0 * M_PI / s.wavelength;
  const double c = std::cos(theta_t);
  return s.rcs * s.rcs * s.frame_len * k0 * k0 * c * c / (2.0 * s.noise_radar);
}

inline double inv_crb_closed(const Scenario& s, const ArrayLayout& tx, const ArrayLayout& rx, double theta_t,
                             double dist_t, const BeamformingSolution& b) {
  if (rx.size() < 2) throw DegenerateArrayError("receive array needs at least two elements");
  const double tss = total_sum_of_squares(rx.coords);
  if (!(tss > 0.0)) throw DegenerateArrayError("receive positions coincide (zero spread)");
  if (std::abs(std::cos(theta_t)) < 1e-12) return 0.0;
  const Eigen::VectorXcd a = tx_steering(tx, theta_t, s.wavelength);
  const double ara = quad_form(a, tx_covariance(b));
  return crb_gain(s, theta_t) / (dist_t * dist_t) * ara * tss;
}

inline double crb_closed(const Scenario& s, const ArrayLayout& tx, const ArrayLayout& rx, double theta_t,
                         double dist_t, const BeamformingSolution& b) {
  const double inv = inv_crb_closed(s, tx, rx, theta_t, dist_t, b);
  if (!(inv > 0.0)) return std::numeric_limits<double>::infinity();
  return 1.0 / inv;
}

// Fisher-information form built from A = b a^H and its angular derivative.
inline double crb_trace_form(const Scenario& s, const ArrayLayout& tx, const ArrayLayout& rx, double theta_t,
                             double dist_t, const BeamformingSolution& b) {
  const Eigen::VectorXcd a = tx_steering(tx, theta_t, s.wavelength);
  const Eigen::VectorXcd rv = rx_steering(rx, theta_t, s.wavelength);
  const Eigen::VectorXcd da = steering_derivative(tx.coords, theta_t, s.wavelength);
  const Eigen::VectorXcd db = steering_derivative(rx.coords, theta_t, s.wavelength);
  const Eigen::MatrixXcd A = rv * a.adjoint();
  const Eigen::MatrixXcd dA = db * a.adjoint() + rv * da.adjoint();
  const Eigen::MatrixXcd R = tx_covariance(b);
  const double t_dd = (dA.adjoint() * dA * R).trace().real();
  const cd t_da = (dA.adjoint() * A * R).trace();
  const double t_aa = (A.adjoint() * A * R).trace().real();
  if (!(t_aa > 0.0)) throw SingularFisherError("no power towards the target");
  const double info = t_dd - std::norm(t_da) / t_aa;
  if (!(info > 1e-12 * std::max(1.0, t_dd))) throw SingularFisherError("Fisher information is singular");
  const double g = std::norm(cd(s.rcs, 0.0) / (2.0 * dist_t));
  return s.noise_radar / (2.0 * g * s.frame_len * info);
}

// Transmit gain a^H R_x a towards a ground point.
inline double beampattern_gain(const Scenario& s, const ArrayLayout& tx, const BeamformingSolution& b,
                               const Vec2& uav, const Vec2& ground) {
  const double theta = elevation_angle(uav, ground, s.altitude);
  return quad_form(tx_steering(tx, theta, s.wavelength), tx_covariance(b));
}

inline void write_beampattern_csv(const std::string& path, const Scenario& s, const ArrayLayout& tx,
                                  const BeamformingSolution& b, const Vec2& uav, double x0, double x1, double y0,
                                  double y1, int nx, int ny) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "x_m,y_m,gain_linear,gain_db\n";
  out.precision(10);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double x = nx > 1 ? x0 + (x1 - x0) * ix / (nx - 1) : x0;
      const double y = ny > 1 ? y0 + (y1 - y0) * iy / (ny - 1) : y0;
      const double g = beampattern_gain(s, tx, b, uav, Vec2(x, y));
      out << x << "," << y << "," << g << "," << 10.0 * std::log10(std::max(g, 1e-300)) << "\n";
    }
  }
}

// Everything a slot needs for the objective: user channel statistics and target geometry.
struct SlotGeometry {
  std::vector<ChannelStats> users;
  double theta_t = 0.0;
  double dist_t = 0.0;
  Eigen::VectorXcd a_t;
  double tss = 0.0;
  double sensing_gain = 0.0;  // inverse CRB per unit of a^H R_x a
};

inline SlotGeometry slot_geometry(const Scenario& s, const Vec2& q, const ArrayLayout& tx, const ArrayLayout& rx) {
  SlotGeometry g;
  for (const auto& u : s.users) g.users.push_back(channel_stats(s, q, u, tx));
  g.theta_t = elevation_angle(q, s.target, s.altitude);
  g.dist_t = std::sqrt((q - s.target).squaredNorm() + s.altitude * s.altitude);
  g.a_t = tx_steering(tx, g.theta_t, s.wavelength);
  g.tss = total_sum_of_squares(rx.coords);
  g.sensing_gain = std::abs(std::cos(g.theta_t)) < 1e-12 ? 0.0 : crb_gain(s, g.theta_t) / (g.dist_t * g.dist_t) * g.tss;
  return g;
}

struct SlotMetrics {
  std::vector<double> rates;
  double inv_crb = 0.0;
  double weighted = 0.0;
};

inline SlotMetrics slot_metrics(const Scenario& s, const SlotGeometry& g, const BeamformingSolution& b) {
  SlotMetrics m;
  double sum = 0.0;
  for (int k = 0; k < s.num_users(); ++k) {
    m.rates.push_back(approx_rate(g.users[k], b, k, s.noise_user));
    sum += m.rates.back();
  }
  m.inv_crb = g.sensing_gain * quad_form(g.a_t, tx_covariance(b));
  m.weighted = s.xi_c * sum + s.xi_s * s.inv_crb_scale * m.inv_crb;
  return m;
}

struct ObjectiveBreakdown {
  std::vector<std::vector<double>> rates;  // [slot][user]
  std::vector<double> inv_crb;             // [slot]
  double sum_rate = 0.0;
  double total_inv_crb = 0.0;
  double weighted = 0.0;

  double slot_sum_rate(int n) const {
    double r = 0.0;
    for (double v : rates[n]) r += v;
    return r;
  }
};

inline ObjectiveBreakdown evaluate_objective(const Scenario& s, const Trajectory& traj,
                                             const std::vector<ArrayLayout>& tx, const std::vector<ArrayLayout>& rx,
                                             const std::vector<BeamformingSolution>& bf) {
  if (traj.size() != s.slots || static_cast<int>(bf.size()) != s.slots) {
    throw std::invalid_argument("evaluate_objective: one point and one design per slot required");
  }
  if (static_cast<int>(tx.size()) != s.intervals || static_cast<int>(rx.size()) != s.intervals) {
    throw std::invalid_argument("evaluate_objective: one layout per interval required");
  }
  ObjectiveBreakdown o;
  for (int n = 0; n < s.slots; ++n) {
    const int i = s.interval_index(n);
    const SlotGeometry g = slot_geometry(s, traj.points[n], tx[i], rx[i]);
    SlotMetrics m = slot_metrics(s, g, bf[n]);
    for (double r : m.rates) o.sum_rate += r;
    o.total_inv_crb += m.inv_crb;
    o.rates.push_back(std::move(m.rates));
    o.inv_crb.push_back(m.inv_crb);
  }
  o.weighted = s.xi_c * o.sum_rate + s.xi_s * s.inv_crb_scale * o.total_inv_crb;
  return o;
}

}  // namespace faisac
