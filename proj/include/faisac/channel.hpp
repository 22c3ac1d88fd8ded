#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "faisac/scenario.hpp"

namespace faisac {

using cd = std::complex<double>;

inline double elevation_angle(const Vec2& uav, const Vec2& ground, double altitude) {
  const double horiz2 = (uav - ground).squaredNorm();
  return std::asin(altitude / std::sqrt(horiz2 + altitude * altitude));
}

inline double rician_factor(double theta, double c1, double c2) { return c1 * std::exp(c2 * theta); }

// exp(j 2pi/lambda * x_k * sin(theta)) per element.
inline Eigen::VectorXcd steering_vector(const Eigen::VectorXd& coords, double theta, double wavelength) {
  const double phase = 2.0 * M_PI / wavelength * std::sin(theta);
  Eigen::VectorXcd v(coords.size());
  for (int k = 0; k < coords.size(); ++k) v[k] = std::polar(1.0, phase * coords[k]);
  return v;
}

// Derivative of steering_vector with respect to theta.
inline Eigen::VectorXcd steering_derivative(const Eigen::VectorXd& coords, double theta, double wavelength) {
  const double k0 = 2.0 * M_PI / wavelength;
  Eigen::VectorXcd v = steering_vector(coords, theta, wavelength);
  for (int k = 0; k < coords.size(); ++k) v[k] *= cd(0.0, k0 * std::cos(theta) * coords[k]);
  return v;
}

inline Eigen::VectorXcd tx_steering(const ArrayLayout& tx, double theta, double wavelength) {
  if (tx.kind != ArrayKind::transmit) throw std::invalid_argument("tx_steering needs a transmit layout");
  return steering_vector(tx.coords, theta, wavelength);
}

inline Eigen::VectorXcd rx_steering(const ArrayLayout& rx, double theta, double wavelength) {
  if (rx.kind != ArrayKind::receive) throw std::invalid_argument("rx_steering needs a receive layout");
  return steering_vector(rx.coords, theta, wavelength);
}

struct ChannelStats {
  double theta = 0.0;
  double dist = 0.0;
  double kappa = 0.0;
  double beta = 0.0;  // h0 / d^2
  double zeta_los = 0.0;   // kappa beta / (kappa + 1)
  double zeta_nlos = 0.0;  // beta / (kappa + 1)
  Eigen::VectorXcd h_bar;  // unit-modulus LoS steering component
};

inline ChannelStats channel_stats(const Scenario& s, const Vec2& uav, const Vec2& ground, const ArrayLayout& tx) {
  ChannelStats c;
  const double horiz2 = (uav - ground).squaredNorm();
  c.dist = std::sqrt(horiz2 + s.altitude * s.altitude);
  c.theta = elevation_angle(uav, ground, s.altitude);
  c.kappa = rician_factor(c.theta, s.rician_c1, s.rician_c2);
  c.beta = s.h0 / (c.dist * c.dist);
  c.zeta_los = c.kappa * c.beta / (c.kappa + 1.0);
  c.zeta_nlos = c.beta / (c.kappa + 1.0);
  c.h_bar = tx_steering(tx, c.theta, s.wavelength);
  return c;
}

// One realization sqrt(beta) (sqrt(k/(k+1)) h_bar + sqrt(1/(k+1)) h_tilde), h_tilde ~ CN(0, I).
class ChannelSampler {
 public:
  explicit ChannelSampler(std::uint64_t seed) : rng_(seed) {}

  Eigen::VectorXcd sample(const ChannelStats& c) {
    std::normal_distribution<double> g(0.0, std::sqrt(0.5));
    const double a = std::sqrt(c.zeta_los);
    const double b = std::sqrt(c.zeta_nlos);
    Eigen::VectorXcd h(c.h_bar.size());
    for (int k = 0; k < h.size(); ++k) {
      const double re = g(rng_);
      const double im = g(rng_);
      h[k] = a * c.h_bar[k] + b * cd(re, im);
    }
    return h;
  }

 private:
  std::mt19937_64 rng_;
};

inline Eigen::VectorXcd sample_channel(const ChannelStats& c, std::uint64_t seed) {
  ChannelSampler s(seed);
  return s.sample(c);
}

}  // namespace faisac
