#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "faisac/metrics.hpp"
#include "faisac/scenario.hpp"

namespace faisac {

// Layout with `lower` antennas packed at d_min from 0 and the rest packed at d_min ending at d_fa.
inline ArrayLayout split_layout(int n, int lower, double d_min, double d_fa) {
  ArrayLayout l;
  l.kind = ArrayKind::receive;
  l.coords.resize(n);
  for (int p = 0; p < n; ++p) l.coords[p] = p < lower ? p * d_min : d_fa - (n - 1 - p) * d_min;
  return l;
}

// Size of the lower cluster in the TSS-optimal placement; odd counts put the extra antenna at the top.
inline int optimal_rx_split(int n) { return n / 2; }

inline ArrayLayout optimal_rx_positions(int n, double d_min, double d_fa) {
  if (n < 1) throw ScenarioError("receive array needs at least one antenna");
  if ((n - 1) * d_min > d_fa * (1.0 + 1e-12)) {
    throw ScenarioError("receive array infeasible: (n_rx - 1) d_min exceeds D_FA");
  }
  if (n == 1) return split_layout(1, 1, d_min, d_fa);
  return split_layout(n, optimal_rx_split(n), d_min, d_fa);
}

struct BruteForceRx {
  ArrayLayout layout;
  double tss = 0.0;
  int best_split = 0;            // lower-cluster size of the best boundary layout
  std::vector<double> split_tss; // index j - 1 holds the TSS with j antennas in the lower cluster
  int grid_improvements = 0;     // grid moves that beat the best boundary layout (expected 0)
};

// Exhaustive search over boundary layouts (one large gap), then grid coordinate sweeps from the best one.
inline BruteForceRx brute_force_rx(int n, double d_min, double d_fa, double grid_step) {
  BruteForceRx r;
  if (n == 1) {
    r.layout = split_layout(1, 1, d_min, d_fa);
    return r;
  }
  r.tss = -1.0;
  for (int j = 1; j < n; ++j) {
    const ArrayLayout l = split_layout(n, j, d_min, d_fa);
    const double t = total_sum_of_squares(l.coords);
    r.split_tss.push_back(t);
    if (t > r.tss * (1.0 + 1e-14)) {
      r.tss = t;
      r.layout = l;
      r.best_split = j;
    }
  }
  if (!(grid_step > 0.0)) return r;
  const double steps = std::min(1e4, std::floor(d_fa / grid_step));
  const double h = d_fa / std::max(1.0, steps);
  Eigen::VectorXd y = r.layout.coords;
  bool moved = true;
  while (moved) {
    moved = false;
    for (int p = 0; p < n; ++p) {
      const double lo = p == 0 ? 0.0 : y[p - 1] + d_min;
      const double hi = p == n - 1 ? d_fa : y[p + 1] - d_min;
      double best = total_sum_of_squares(y), best_pos = y[p];
      const double keep = y[p];
      for (double v = std::ceil(lo / h) * h; v <= hi + 1e-12 * d_fa; v += h) {
        y[p] = std::min(v, hi);
        const double t = total_sum_of_squares(y);
        if (t > best * (1.0 + 1e-12)) {
          best = t;
          best_pos = y[p];
        }
      }
      y[p] = best_pos;
      if (best_pos != keep) {
        moved = true;
        ++r.grid_improvements;
      }
    }
  }
  if (r.grid_improvements > 0) {
    r.layout.coords = y;
    r.tss = total_sum_of_squares(y);
  }
  return r;
}

}  // namespace faisac
