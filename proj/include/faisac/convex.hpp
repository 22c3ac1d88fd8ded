#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace faisac::convex {

using cd = std::complex<double>;

struct Term {
  int index;
  double coef;
};

struct AffineExpr {
  std::vector<Term> terms;
  double constant = 0.0;

  AffineExpr() = default;
  explicit AffineExpr(double c) : constant(c) {}

  AffineExpr& add(int index, double coef) {
    if (coef != 0.0) terms.push_back({index, coef});
    return *this;
  }
  AffineExpr& add(const AffineExpr& o, double scale = 1.0) {
    for (const auto& t : o.terms) add(t.index, scale * t.coef);
    constant += scale * o.constant;
    return *this;
  }
  AffineExpr scaled(double s) const {
    AffineExpr e;
    e.add(*this, s);
    return e;
  }
  double eval(const Eigen::VectorXd& z) const {
    double v = constant;
    for (const auto& t : terms) v += t.coef * z[t.index];
    return v;
  }
  double linear_part(const Eigen::VectorXd& dz) const {
    double v = 0.0;
    for (const auto& t : terms) v += t.coef * dz[t.index];
    return v;
  }
};

// 0.5 * z[indices]^T matrix z[indices]
struct QuadraticForm {
  std::vector<int> indices;
  Eigen::MatrixXd matrix;

  bool empty() const { return indices.empty(); }
  Eigen::VectorXd gather(const Eigen::VectorXd& z) const {
    Eigen::VectorXd v(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) v[k] = z[indices[k]];
    return v;
  }
  double eval(const Eigen::VectorXd& z) const {
    if (empty()) return 0.0;
    const Eigen::VectorXd v = gather(z);
    return 0.5 * v.dot(matrix * v);
  }
};

enum class BlockKind { hermitian_psd, real_vector, real_scalar };

struct VariableBlock {
  std::string name;
  BlockKind kind = BlockKind::real_scalar;
  int dim = 1;
  int offset = 0;
  int size = 1;
  int shift_index = -1;  // X(z) + z[shift_index] * I when >= 0
};

enum class ConstraintKind { linear_equality, linear_inequality, convex_quadratic, concave_quadratic, log_affine };

// linear_equality:   affine == 0
// linear_inequality: affine <= 0
// convex_quadratic:  quad + affine <= 0  (quad PSD)
// concave_quadratic: quad + affine >= 0  (quad NSD)
// log_affine:        affine >= -ln(log_arg), log_arg > 0
struct Constraint {
  ConstraintKind kind = ConstraintKind::linear_inequality;
  std::string label;
  QuadraticForm quad;
  AffineExpr affine;
  AffineExpr log_arg;
};

// weight * ln(sum_k c_k exp(u_k)); enters as a concave penalty when maximizing, convex cost when minimizing.
struct LogSumExp {
  double weight = 1.0;
  std::vector<std::pair<double, AffineExpr>> terms;
};

enum class Sense { maximize, minimize };

class ConicProgram {
 public:
  int add_hermitian_psd(const std::string& name, int n) {
    if (n < 1) throw std::invalid_argument("hermitian block needs n >= 1");
    VariableBlock b{name, BlockKind::hermitian_psd, n, n_, n * n, -1};
    n_ += b.size;
    blocks_.push_back(b);
    return static_cast<int>(blocks_.size()) - 1;
  }
  int add_vector(const std::string& name, int n) {
    VariableBlock b{name, BlockKind::real_vector, n, n_, n, -1};
    n_ += n;
    blocks_.push_back(b);
    return static_cast<int>(blocks_.size()) - 1;
  }
  int add_scalar(const std::string& name) {
    VariableBlock b{name, BlockKind::real_scalar, 1, n_, 1, -1};
    n_ += 1;
    blocks_.push_back(b);
    return static_cast<int>(blocks_.size()) - 1;
  }

  int num_variables() const { return n_; }
  const std::vector<VariableBlock>& blocks() const { return blocks_; }
  const VariableBlock& block(int id) const { return blocks_.at(id); }
  int index(int block_id, int k = 0) const { return blocks_.at(block_id).offset + k; }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  Sense sense() const { return sense_; }
  const AffineExpr& objective() const { return objective_; }
  const std::vector<LogSumExp>& log_sum_exps() const { return lse_; }
  const Eigen::VectorXd& start() const { return start_; }

  // Hermitian parameterization: n diagonal reals, then real parts and imaginary parts of the strict upper triangle.
  static int pair_index(int n, int p, int q) { return p * n - p * (p + 1) / 2 + (q - p - 1); }

  // Re tr(C X) for the Hermitian block; C is taken through its Hermitian part.
  AffineExpr hermitian_trace(int block_id, const Eigen::MatrixXcd& c) const {
    const VariableBlock& b = hermitian_block(block_id);
    const int n = b.dim;
    const int np = n * (n - 1) / 2;
    AffineExpr e;
    for (int p = 0; p < n; ++p) e.add(b.offset + p, c(p, p).real());
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const int k = pair_index(n, p, q);
        const cd h = 0.5 * (c(p, q) + std::conj(c(q, p)));
        e.add(b.offset + n + k, 2.0 * h.real());
        e.add(b.offset + n + np + k, 2.0 * h.imag());
      }
    }
    return e;
  }

  Eigen::MatrixXcd hermitian_value(int block_id, const Eigen::VectorXd& z) const {
    return hermitian_from(hermitian_block(block_id), z);
  }

  void store_hermitian(int block_id, const Eigen::MatrixXcd& x, Eigen::VectorXd& z) const {
    const VariableBlock& b = hermitian_block(block_id);
    const int n = b.dim;
    const int np = n * (n - 1) / 2;
    for (int p = 0; p < n; ++p) z[b.offset + p] = x(p, p).real();
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const int k = pair_index(n, p, q);
        const cd h = 0.5 * (x(p, q) + std::conj(x(q, p)));
        z[b.offset + n + k] = h.real();
        z[b.offset + n + np + k] = h.imag();
      }
    }
  }

  void add_linear_equality(AffineExpr e, std::string label = {}) {
    push(ConstraintKind::linear_equality, {}, std::move(e), {}, std::move(label));
  }
  void add_linear_le(AffineExpr e, std::string label = {}) {
    push(ConstraintKind::linear_inequality, {}, std::move(e), {}, std::move(label));
  }
  void add_convex_quadratic(QuadraticForm q, AffineExpr e, std::string label = {}) {
    check_sign(q, +1, label);
    push(ConstraintKind::convex_quadratic, std::move(q), std::move(e), {}, std::move(label));
  }
  void add_concave_quadratic(QuadraticForm q, AffineExpr e, std::string label = {}) {
    check_sign(q, -1, label);
    push(ConstraintKind::concave_quadratic, std::move(q), std::move(e), {}, std::move(label));
  }
  void add_log_affine(AffineExpr lhs, AffineExpr arg, std::string label = {}) {
    push(ConstraintKind::log_affine, {}, std::move(lhs), std::move(arg), std::move(label));
  }

  void set_objective(Sense s, AffineExpr linear) {
    sense_ = s;
    objective_ = std::move(linear);
  }
  void add_log_sum_exp(LogSumExp l) {
    if (!(l.weight >= 0.0)) throw std::invalid_argument("log-sum-exp weight must be >= 0");
    for (const auto& [c, u] : l.terms) {
      if (!(c > 0.0)) throw std::invalid_argument("log-sum-exp coefficients must be > 0");
      check_indices(u);
    }
    lse_.push_back(std::move(l));
  }
  void set_start(Eigen::VectorXd z) {
    if (z.size() != n_) throw std::invalid_argument("start point has the wrong size");
    start_ = std::move(z);
  }

  // Objective in the program's own sense.
  double objective_value(const Eigen::VectorXd& z) const {
    double lse = 0.0;
    for (const auto& l : lse_) lse += l.weight * log_sum_exp_value(l, z);
    return sense_ == Sense::maximize ? objective_.eval(z) - lse : objective_.eval(z) + lse;
  }

  // Largest violation over all constraints (0 when feasible); PSD blocks use their smallest eigenvalue.
  double max_violation(const Eigen::VectorXd& z) const {
    double v = 0.0;
    for (const auto& c : constraints_) {
      switch (c.kind) {
        case ConstraintKind::linear_equality: v = std::max(v, std::abs(c.affine.eval(z))); break;
        case ConstraintKind::linear_inequality: v = std::max(v, c.affine.eval(z)); break;
        case ConstraintKind::convex_quadratic: v = std::max(v, c.quad.eval(z) + c.affine.eval(z)); break;
        case ConstraintKind::concave_quadratic: v = std::max(v, -(c.quad.eval(z) + c.affine.eval(z))); break;
        case ConstraintKind::log_affine: {
          const double u = c.log_arg.eval(z);
          v = std::max(v, u > 0.0 ? -(c.affine.eval(z) + std::log(u)) : std::numeric_limits<double>::infinity());
          break;
        }
      }
    }
    for (const auto& b : blocks_) {
      if (b.kind != BlockKind::hermitian_psd) continue;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian_from(b, z), Eigen::EigenvaluesOnly);
      v = std::max(v, -es.eigenvalues()[0]);
    }
    return v;
  }

  static double log_sum_exp_value(const LogSumExp& l, const Eigen::VectorXd& z) {
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> e(l.terms.size());
    for (std::size_t k = 0; k < l.terms.size(); ++k) {
      e[k] = std::log(l.terms[k].first) + l.terms[k].second.eval(z);
      m = std::max(m, e[k]);
    }
    double s = 0.0;
    for (double v : e) s += std::exp(v - m);
    return m + std::log(s);
  }

  Eigen::MatrixXcd hermitian_from(const VariableBlock& b, const Eigen::VectorXd& z) const {
    const int n = b.dim;
    const int np = n * (n - 1) / 2;
    Eigen::MatrixXcd x(n, n);
    for (int p = 0; p < n; ++p) x(p, p) = z[b.offset + p];
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const int k = pair_index(n, p, q);
        x(p, q) = cd(z[b.offset + n + k], z[b.offset + n + np + k]);
        x(q, p) = std::conj(x(p, q));
      }
    }
    if (b.shift_index >= 0) x.diagonal().array() += z[b.shift_index];
    return x;
  }

  // Feasibility program over (z, s): every inequality relaxed by s, minimize s, s >= -1,
  // with z kept in a box of half-width radius * max(1, |z0_i|) so the barrier stays bounded.
  ConicProgram phase_one(const Eigen::VectorXd& z0, double s0, double radius) const {
    ConicProgram p;
    p.blocks_ = blocks_;
    p.n_ = n_;
    const int s = p.add_scalar("phase_one_slack");
    const int si = p.index(s);
    for (auto& b : p.blocks_) {
      if (b.kind == BlockKind::hermitian_psd) b.shift_index = si;
    }
    for (const auto& c : constraints_) {
      Constraint d = c;
      switch (c.kind) {
        case ConstraintKind::linear_equality: break;
        case ConstraintKind::linear_inequality:
        case ConstraintKind::convex_quadratic: d.affine.add(si, -1.0); break;
        case ConstraintKind::concave_quadratic:
        case ConstraintKind::log_affine: d.affine.add(si, 1.0); break;
      }
      p.constraints_.push_back(std::move(d));
    }
    AffineExpr floor;
    floor.add(si, -1.0);
    floor.constant = -1.0;
    p.add_linear_le(floor, "phase_one_floor");
    for (int i = 0; i < n_; ++i) {
      const double r = radius * std::max(1.0, std::abs(z0[i]));
      AffineExpr up;
      up.add(i, 1.0);
      up.constant = -(z0[i] + r);
      p.add_linear_le(up, "phase_one_box");
      AffineExpr lo;
      lo.add(i, -1.0);
      lo.constant = z0[i] - r;
      p.add_linear_le(lo, "phase_one_box");
    }
    AffineExpr obj;
    obj.add(si, 1.0);
    p.set_objective(Sense::minimize, obj);
    Eigen::VectorXd z(p.n_);
    z.head(n_) = z0;
    z[si] = s0;
    p.start_ = z;
    return p;
  }

  nlohmann::json to_json() const {
    using nlohmann::json;
    auto affine_json = [](const AffineExpr& e) {
      json t = json::array();
      for (const auto& x : e.terms) t.push_back({x.index, x.coef});
      return json{{"terms", t}, {"constant", e.constant}};
    };
    json blocks = json::array();
    for (const auto& b : blocks_) {
      const char* kind = b.kind == BlockKind::hermitian_psd ? "hermitian_psd"
                         : b.kind == BlockKind::real_vector ? "real_vector"
                                                            : "real_scalar";
      blocks.push_back({{"name", b.name}, {"kind", kind}, {"dim", b.dim}, {"offset", b.offset}, {"size", b.size}});
    }
    json cons = json::array();
    for (const auto& c : constraints_) {
      static const char* names[] = {"linear_equality", "linear_inequality", "convex_quadratic", "concave_quadratic",
                                    "log_affine"};
      json j{{"kind", names[static_cast<int>(c.kind)]}, {"label", c.label}, {"affine", affine_json(c.affine)}};
      if (!c.quad.empty()) {
        json m = json::array();
        for (int r = 0; r < c.quad.matrix.rows(); ++r) {
          json row = json::array();
          for (int k = 0; k < c.quad.matrix.cols(); ++k) row.push_back(c.quad.matrix(r, k));
          m.push_back(row);
        }
        j["quad"] = {{"indices", c.quad.indices}, {"matrix", m}};
      }
      if (c.kind == ConstraintKind::log_affine) j["log_arg"] = affine_json(c.log_arg);
      cons.push_back(j);
    }
    json lse = json::array();
    for (const auto& l : lse_) {
      json t = json::array();
      for (const auto& [c, u] : l.terms) t.push_back({{"coef", c}, {"exponent", affine_json(u)}});
      lse.push_back({{"weight", l.weight}, {"terms", t}});
    }
    return {{"sense", sense_ == Sense::maximize ? "maximize" : "minimize"},
            {"variables", n_},
            {"blocks", blocks},
            {"objective", affine_json(objective_)},
            {"log_sum_exp", lse},
            {"constraints", cons}};
  }

  void dump(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << to_json().dump(1) << "\n";
  }

 private:
  const VariableBlock& hermitian_block(int id) const {
    const VariableBlock& b = blocks_.at(id);
    if (b.kind != BlockKind::hermitian_psd) throw std::invalid_argument("block '" + b.name + "' is not Hermitian");
    return b;
  }

  void check_indices(const AffineExpr& e) const {
    for (const auto& t : e.terms) {
      if (t.index < 0 || t.index >= n_) throw std::out_of_range("affine term refers to an unknown variable");
    }
  }

  static void check_sign(const QuadraticForm& q, int sign, const std::string& label) {
    if (q.matrix.rows() != static_cast<int>(q.indices.size()) || q.matrix.cols() != q.matrix.rows()) {
      throw std::invalid_argument("quadratic form '" + label + "' has inconsistent dimensions");
    }
    if (q.empty()) return;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (q.matrix + q.matrix.transpose()),
                                                      Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    const double worst = sign > 0 ? es.eigenvalues().minCoeff() : -es.eigenvalues().maxCoeff();
    if (worst < -1e-9 * scale) {
      throw std::invalid_argument("quadratic form '" + label + "' does not match its curvature tag");
    }
  }

  void push(ConstraintKind k, QuadraticForm q, AffineExpr e, AffineExpr arg, std::string label) {
    check_indices(e);
    check_indices(arg);
    for (int i : q.indices) {
      if (i < 0 || i >= n_) throw std::out_of_range("quadratic form refers to an unknown variable");
    }
    q.matrix = 0.5 * (q.matrix + q.matrix.transpose()).eval();
    constraints_.push_back({k, std::move(label), std::move(q), std::move(e), std::move(arg)});
  }

  std::vector<VariableBlock> blocks_;
  int n_ = 0;
  std::vector<Constraint> constraints_;
  Sense sense_ = Sense::maximize;
  AffineExpr objective_;
  std::vector<LogSumExp> lse_;
  Eigen::VectorXd start_;
};

// ---------------------------------------------------------------------------
// Solver

struct SolverOptions {
  double feas_tol = 1e-8;
  double rel_gap = 1e-7;
  int max_iters = 200;
  double mu = 15.0;
};

enum class SolverStatus { optimal, max_iters, infeasible, numerical_failure };

inline const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::optimal: return "optimal";
    case SolverStatus::max_iters: return "max-iters";
    case SolverStatus::infeasible: return "infeasible";
    case SolverStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

struct SolverReport {
  SolverStatus status = SolverStatus::numerical_failure;
  double objective = 0.0;
  double dual_bound = 0.0;
  int iterations = 0;
  int phase_one_iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double wall_time_s = 0.0;
  std::string message;
};

struct Solution {
  Eigen::VectorXd z;
  SolverReport report;
};

namespace detail {

using SparseVec = std::vector<std::pair<int, double>>;

inline void axpy(Eigen::VectorXd& g, const SparseVec& v, double s) {
  for (const auto& [i, x] : v) g[i] += s * x;
}
inline void rank_one(Eigen::MatrixXd& h, const SparseVec& v, double s) {
  for (const auto& [i, x] : v) {
    for (const auto& [j, y] : v) h(i, j) += s * x * y;
  }
}
inline double dot(const SparseVec& v, const Eigen::VectorXd& d) {
  double r = 0.0;
  for (const auto& [i, x] : v) r += x * d[i];
  return r;
}
inline SparseVec affine_grad(const AffineExpr& e) {
  SparseVec v;
  v.reserve(e.terms.size());
  for (const auto& t : e.terms) v.emplace_back(t.index, t.coef);
  return v;
}

// One Hermitian basis element: a list of (row, col, weight).
struct Generator {
  int index;
  std::vector<std::tuple<int, int, cd>> entries;
};

inline std::vector<Generator> hermitian_generators(const VariableBlock& b) {
  const int n = b.dim;
  const int np = n * (n - 1) / 2;
  std::vector<Generator> gens;
  for (int p = 0; p < n; ++p) gens.push_back({b.offset + p, {{p, p, cd(1.0, 0.0)}}});
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      const int k = ConicProgram::pair_index(n, p, q);
      gens.push_back({b.offset + n + k, {{p, q, cd(1.0, 0.0)}, {q, p, cd(1.0, 0.0)}}});
      gens.push_back({b.offset + n + np + k, {{p, q, cd(0.0, 1.0)}, {q, p, cd(0.0, -1.0)}}});
    }
  }
  if (b.shift_index >= 0) {
    Generator s{b.shift_index, {}};
    for (int p = 0; p < n; ++p) s.entries.emplace_back(p, p, cd(1.0, 0.0));
    gens.push_back(s);
  }
  return gens;
}

// Cached barrier quantities at one point.
struct Point {
  Eigen::VectorXd z;
  std::vector<double> slack;         // per constraint: distance to boundary (>0)
  std::vector<double> slack2;        // log_affine: ln(arg) + lhs
  std::vector<SparseVec> grad;       // per constraint: gradient of the constraint function
  std::vector<Eigen::LLT<Eigen::MatrixXcd>> chol;  // per PSD block
  std::vector<std::vector<double>> softmax;        // per log-sum-exp
  double cost = 0.0;
};

class Barrier {
 public:
  explicit Barrier(const ConicProgram& p) : p_(p) {
    for (int b = 0; b < static_cast<int>(p.blocks().size()); ++b) {
      if (p.blocks()[b].kind == BlockKind::hermitian_psd) {
        psd_.push_back(b);
        gens_.push_back(hermitian_generators(p.blocks()[b]));
      }
    }
    sgn_ = p.sense() == Sense::maximize ? -1.0 : 1.0;
    nu_ = 0.0;
    for (const auto& c : p.constraints()) {
      if (c.kind == ConstraintKind::linear_equality) {
        eq_.push_back(&c);
      } else {
        nu_ += c.kind == ConstraintKind::log_affine ? 2.0 : 1.0;
      }
    }
    for (int b : psd_) nu_ += p.blocks()[b].dim;
  }

  double nu() const { return nu_; }
  const std::vector<const Constraint*>& equalities() const { return eq_; }

  // Returns false when z lies outside the barrier domain.
  bool evaluate(const Eigen::VectorXd& z, Point& pt) const {
    const auto& cs = p_.constraints();
    pt.z = z;
    pt.slack.assign(cs.size(), 0.0);
    pt.slack2.assign(cs.size(), 0.0);
    pt.grad.assign(cs.size(), {});
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const Constraint& c = cs[k];
      switch (c.kind) {
        case ConstraintKind::linear_equality: break;
        case ConstraintKind::linear_inequality: {
          pt.slack[k] = -c.affine.eval(z);
          if (!(pt.slack[k] > 0.0)) return false;
          pt.grad[k] = affine_grad(c.affine);
          break;
        }
        case ConstraintKind::convex_quadratic:
        case ConstraintKind::concave_quadratic: {
          const double v = c.quad.eval(z) + c.affine.eval(z);
          pt.slack[k] = c.kind == ConstraintKind::convex_quadratic ? -v : v;
          if (!(pt.slack[k] > 0.0)) return false;
          SparseVec g = affine_grad(c.affine);
          if (!c.quad.empty()) {
            const Eigen::VectorXd mz = c.quad.matrix * c.quad.gather(z);
            for (std::size_t i = 0; i < c.quad.indices.size(); ++i) g.emplace_back(c.quad.indices[i], mz[i]);
          }
          pt.grad[k] = std::move(g);
          break;
        }
        case ConstraintKind::log_affine: {
          const double u = c.log_arg.eval(z);
          if (!(u > 0.0)) return false;
          pt.slack[k] = u;
          pt.slack2[k] = c.affine.eval(z) + std::log(u);
          if (!(pt.slack2[k] > 0.0)) return false;
          break;
        }
      }
    }
    pt.chol.clear();
    for (int b : psd_) {
      Eigen::LLT<Eigen::MatrixXcd> llt(p_.hermitian_from(p_.blocks()[b], z));
      if (llt.info() != Eigen::Success) return false;
      const auto d = llt.matrixLLT().diagonal().real();
      if (!(d.minCoeff() > 0.0) || !d.allFinite()) return false;
      pt.chol.push_back(std::move(llt));
    }
    pt.softmax.clear();
    pt.cost = sgn_ * p_.objective().eval(z);
    for (const auto& l : p_.log_sum_exps()) {
      std::vector<double> e(l.terms.size());
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < e.size(); ++k) {
        e[k] = std::log(l.terms[k].first) + l.terms[k].second.eval(z);
        m = std::max(m, e[k]);
      }
      double s = 0.0;
      for (double& v : e) {
        v = std::exp(v - m);
        s += v;
      }
      for (double& v : e) v /= s;
      pt.softmax.push_back(std::move(e));
      pt.cost += l.weight * (m + std::log(s));
    }
    return std::isfinite(pt.cost);
  }

  void derivatives(const Point& pt, double t, Eigen::VectorXd& g, Eigen::MatrixXd& h) const {
    const int n = p_.num_variables();
    g = Eigen::VectorXd::Zero(n);
    h = Eigen::MatrixXd::Zero(n, n);
    for (const auto& tm : p_.objective().terms) g[tm.index] += t * sgn_ * tm.coef;
    for (std::size_t l = 0; l < p_.log_sum_exps().size(); ++l) {
      const LogSumExp& lse = p_.log_sum_exps()[l];
      SparseVec mean;
      for (std::size_t k = 0; k < lse.terms.size(); ++k) {
        const double pk = pt.softmax[l][k];
        SparseVec a = affine_grad(lse.terms[k].second);
        axpy(g, a, t * lse.weight * pk);
        rank_one(h, a, t * lse.weight * pk);
        for (auto& e : a) e.second *= pk;
        mean.insert(mean.end(), a.begin(), a.end());
      }
      rank_one(h, mean, -t * lse.weight);
    }
    const auto& cs = p_.constraints();
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const Constraint& c = cs[k];
      switch (c.kind) {
        case ConstraintKind::linear_equality: break;
        case ConstraintKind::linear_inequality:
        case ConstraintKind::convex_quadratic: {
          const double r = pt.slack[k];
          axpy(g, pt.grad[k], 1.0 / r);
          rank_one(h, pt.grad[k], 1.0 / (r * r));
          if (!c.quad.empty()) add_block(h, c.quad, 1.0 / r);
          break;
        }
        case ConstraintKind::concave_quadratic: {
          const double r = pt.slack[k];
          axpy(g, pt.grad[k], -1.0 / r);
          rank_one(h, pt.grad[k], 1.0 / (r * r));
          if (!c.quad.empty()) add_block(h, c.quad, -1.0 / r);
          break;
        }
        case ConstraintKind::log_affine: {
          const double u = pt.slack[k];
          const double w = pt.slack2[k];
          const SparseVec a = affine_grad(c.log_arg);
          SparseVec d = affine_grad(c.affine);
          for (const auto& [i, x] : a) d.emplace_back(i, x / u);
          axpy(g, a, -1.0 / u);
          rank_one(h, a, 1.0 / (u * u));
          axpy(g, d, -1.0 / w);
          rank_one(h, d, 1.0 / (w * w));
          rank_one(h, a, 1.0 / (u * u * w));
          break;
        }
      }
    }
    for (std::size_t b = 0; b < psd_.size(); ++b) {
      const int dim = p_.blocks()[psd_[b]].dim;
      const Eigen::MatrixXcd y = pt.chol[b].solve(Eigen::MatrixXcd::Identity(dim, dim));
      const auto& gens = gens_[b];
      std::vector<Eigen::MatrixXcd> ya(gens.size());
      for (std::size_t a = 0; a < gens.size(); ++a) {
        cd tr(0.0, 0.0);
        Eigen::MatrixXcd c = Eigen::MatrixXcd::Zero(dim, dim);
        for (const auto& [u, v, w] : gens[a].entries) {
          tr += w * y(v, u);
          c.noalias() += w * y.col(u) * y.row(v);
        }
        g[gens[a].index] -= tr.real();
        ya[a] = std::move(c);
      }
      for (std::size_t a = 0; a < gens.size(); ++a) {
        for (std::size_t bb = a; bb < gens.size(); ++bb) {
          cd tr(0.0, 0.0);
          for (const auto& [u, v, w] : gens[bb].entries) tr += w * ya[a](v, u);
          const int i = gens[a].index;
          const int j = gens[bb].index;
          h(i, j) += tr.real();
          if (i != j || a != bb) h(j, i) += tr.real();
        }
      }
    }
  }

  // phi(z + step) - phi(z) evaluated term by term; false when z + step leaves the domain.
  bool delta(const Point& pt, const Eigen::VectorXd& step, double t, double& out) const {
    double d = t * sgn_ * p_.objective().linear_part(step);
    for (std::size_t l = 0; l < p_.log_sum_exps().size(); ++l) {
      const LogSumExp& lse = p_.log_sum_exps()[l];
      double acc = 0.0;
      for (std::size_t k = 0; k < lse.terms.size(); ++k) {
        acc += pt.softmax[l][k] * std::expm1(lse.terms[k].second.linear_part(step));
      }
      if (!(acc > -1.0)) return false;
      d += t * lse.weight * std::log1p(acc);
    }
    const auto& cs = p_.constraints();
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const Constraint& c = cs[k];
      switch (c.kind) {
        case ConstraintKind::linear_equality: break;
        case ConstraintKind::linear_inequality:
        case ConstraintKind::convex_quadratic:
        case ConstraintKind::concave_quadratic: {
          double change = dot(pt.grad[k], step);
          if (!c.quad.empty()) {
            Eigen::VectorXd s(c.quad.indices.size());
            for (std::size_t i = 0; i < c.quad.indices.size(); ++i) s[i] = step[c.quad.indices[i]];
            change += 0.5 * s.dot(c.quad.matrix * s);
          }
          const double rel = (c.kind == ConstraintKind::concave_quadratic ? change : -change) / pt.slack[k];
          if (!(rel > -1.0)) return false;
          d -= std::log1p(rel);
          break;
        }
        case ConstraintKind::log_affine: {
          const double ru = c.log_arg.linear_part(step) / pt.slack[k];
          if (!(ru > -1.0)) return false;
          const double lu = std::log1p(ru);
          const double rw = (c.affine.linear_part(step) + lu) / pt.slack2[k];
          if (!(rw > -1.0)) return false;
          d -= lu + std::log1p(rw);
          break;
        }
      }
    }
    for (std::size_t b = 0; b < psd_.size(); ++b) {
      const VariableBlock& blk = p_.blocks()[psd_[b]];
      Eigen::VectorXd zs = Eigen::VectorXd::Zero(p_.num_variables());
      for (int k = 0; k < blk.size; ++k) zs[blk.offset + k] = step[blk.offset + k];
      if (blk.shift_index >= 0) zs[blk.shift_index] = step[blk.shift_index];
      const Eigen::MatrixXcd dx = p_.hermitian_from(blk, zs);
      const auto& llt = pt.chol[b];
      Eigen::MatrixXcd m = llt.matrixL().solve(dx);
      m = llt.matrixL().solve(m.adjoint()).adjoint();
      m = 0.5 * (m + m.adjoint()).eval();
      m.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXcd> l2(m);
      if (l2.info() != Eigen::Success) return false;
      const auto diag = l2.matrixLLT().diagonal().real();
      if (!(diag.minCoeff() > 0.0)) return false;
      d -= 2.0 * diag.array().log().sum();
    }
    if (!std::isfinite(d)) return false;
    out = d;
    return true;
  }

  double cost(const Point& pt) const { return pt.cost; }
  double sign() const { return sgn_; }

 private:
  static void add_block(Eigen::MatrixXd& h, const QuadraticForm& q, double s) {
    for (std::size_t i = 0; i < q.indices.size(); ++i) {
      for (std::size_t j = 0; j < q.indices.size(); ++j) h(q.indices[i], q.indices[j]) += s * q.matrix(i, j);
    }
  }

  const ConicProgram& p_;
  std::vector<int> psd_;
  std::vector<std::vector<Generator>> gens_;
  std::vector<const Constraint*> eq_;
  double sgn_ = 1.0;
  double nu_ = 0.0;
};

struct EqualitySystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;  // a z + b = 0
};

inline EqualitySystem equality_system(const Barrier& bar, int n) {
  EqualitySystem e;
  const auto& eq = bar.equalities();
  e.a = Eigen::MatrixXd::Zero(static_cast<int>(eq.size()), n);
  e.b = Eigen::VectorXd::Zero(static_cast<int>(eq.size()));
  for (std::size_t r = 0; r < eq.size(); ++r) {
    for (const auto& t : eq[r]->affine.terms) e.a(static_cast<int>(r), t.index) += t.coef;
    e.b[static_cast<int>(r)] = eq[r]->affine.constant;
  }
  return e;
}

// Orthonormal basis of {d : A d = 0}; empty matrix when there are no equalities.
inline Eigen::MatrixXd null_space(const EqualitySystem& eq, int n) {
  if (eq.a.rows() == 0) return {};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(eq.a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, sv.size() ? sv[0] : 0.0);
  int rank = 0;
  for (int k = 0; k < sv.size(); ++k) rank += sv[k] > tol ? 1 : 0;
  return svd.matrixV().rightCols(n - rank);
}

inline Eigen::VectorXd solve_spd(const Eigen::MatrixXd& h, const Eigen::VectorXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
  Eigen::VectorXd d = ldlt.solve(rhs);
  if (ldlt.info() == Eigen::Success && d.allFinite() && ldlt.isPositive()) return d;
  Eigen::MatrixXd hr = h;
  hr.diagonal().array() += 1e-12 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
  return Eigen::LDLT<Eigen::MatrixXd>(hr).solve(rhs);
}

inline Eigen::VectorXd newton_direction(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& ns,
                                        bool has_eq) {
  if (!has_eq) return solve_spd(h, -g);
  if (ns.cols() == 0) return Eigen::VectorXd::Zero(g.size());
  const Eigen::MatrixXd hr = ns.transpose() * h * ns;
  return ns * solve_spd(hr, -(ns.transpose() * g));
}

struct BarrierRun {
  Eigen::VectorXd z;
  double t = 1.0;
  int iterations = 0;
  bool converged = false;
  bool stopped = false;
  bool stalled = false;
  double decrement = 0.0;
  double cost = 0.0;
};

template <typename Stop>
BarrierRun barrier_method(const ConicProgram& p, const Eigen::VectorXd& z0, const SolverOptions& opt, double gap_abs,
                          bool gap_relative, Stop stop) {
  Barrier bar(p);
  const EqualitySystem eq = equality_system(bar, p.num_variables());
  const bool has_eq = eq.a.rows() > 0;
  const Eigen::MatrixXd ns = null_space(eq, p.num_variables());
  BarrierRun run;
  Point pt;
  if (!bar.evaluate(z0, pt)) return run;
  run.z = z0;
  run.cost = pt.cost;
  const double nu = std::max(bar.nu(), 1.0);
  run.t = 1.0;
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  while (true) {
    // Centering; once in the quadratic region a few extra steps reach the round-off floor.
    int near = 0;
    for (int inner = 0; inner < 100; ++inner) {
      if (run.iterations >= opt.max_iters) return run;
      bar.derivatives(pt, run.t, g, h);
      const Eigen::VectorXd dz = newton_direction(h, g, ns, has_eq);
      const double slope = g.dot(dz);
      run.decrement = std::sqrt(std::max(0.0, -slope));
      if (!dz.allFinite()) {
        run.stalled = true;
        break;
      }
      if (-slope <= 2e-10) break;
      if (-slope <= 1e-4 && ++near > 4) break;
      double alpha = 1.0;
      double d = 0.0;
      bool ok = false;
      for (int ls = 0; ls < 80; ++ls) {
        if (bar.delta(pt, alpha * dz, run.t, d) && d <= 0.25 * alpha * slope) {
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      ++run.iterations;
#ifdef FAISAC_TRACE
      std::fprintf(stderr, "t=%g it=%d lam2=%g alpha=%g ok=%d cost=%.12g\n", run.t, run.iterations, -slope, alpha, ok, pt.cost);
#endif
      if (!ok) {
        run.stalled = true;
        break;
      }
      Point next;
      if (!bar.evaluate(pt.z + alpha * dz, next)) {
        run.stalled = true;
        break;
      }
      pt = std::move(next);
      run.z = pt.z;
      run.cost = pt.cost;
      if (stop(pt.z)) {
        run.stopped = true;
        return run;
      }
    }
    const double target = gap_relative ? gap_abs * std::max(1.0, std::abs(run.cost)) : gap_abs;
    if (nu / run.t <= target) {
      run.converged = true;
      return run;
    }
    if (run.stalled) return run;
    run.t *= opt.mu;
  }
}

inline Eigen::VectorXd project_equalities(const ConicProgram& p, Eigen::VectorXd z) {
  Barrier bar(p);
  const EqualitySystem eq = equality_system(bar, p.num_variables());
  if (eq.a.rows() == 0) return z;
  const Eigen::VectorXd r = eq.a * z + eq.b;
  if (r.cwiseAbs().maxCoeff() == 0.0) return z;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(eq.a);
  return z - cod.solve(r);
}

}  // namespace detail

inline Solution solve(const ConicProgram& p, const SolverOptions& opt = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  auto finish = [&](Solution s) {
    s.report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return s;
  };
  const int n = p.num_variables();
  Solution sol;
  Eigen::VectorXd z = p.start().size() == n ? p.start() : Eigen::VectorXd::Zero(n);
  z = detail::project_equalities(p, z);

  detail::Barrier bar(p);
  detail::Point pt;
  if (!bar.evaluate(z, pt)) {
    for (const auto& c : p.constraints()) {
      if (c.kind == ConstraintKind::log_affine && !(c.log_arg.eval(z) > 0.0)) {
        sol.z = z;
        sol.report.status = SolverStatus::infeasible;
        sol.report.message = "logarithm argument of '" + c.label + "' is not positive at the start point";
        return finish(sol);
      }
    }
    const double viol = p.max_violation(z);
    const double s0 = viol + std::max(1.0, std::abs(viol)) * 0.1 + 1e-3;
    const int si = n;
    detail::BarrierRun run1;
    for (double radius : {10.0, 1e3, 1e5}) {
      const ConicProgram p1 = p.phase_one(z, s0, radius);
      run1 = detail::barrier_method(p1, p1.start(), opt, 1e-10, false,
                                    [&](const Eigen::VectorXd& w) { return w[si] < -0.1; });
      sol.report.phase_one_iterations += run1.iterations;
      if (run1.z.size() && run1.z[si] < 0.0) break;
    }
    if (run1.z.size() == 0 || !(run1.z[si] < 0.0)) {
      sol.z = run1.z.size() ? Eigen::VectorXd(run1.z.head(n)) : z;
      sol.report.status = SolverStatus::infeasible;
      sol.report.message = "no strictly feasible point found (phase one slack " +
                           std::to_string(run1.z.size() ? run1.z[si] : s0) + ")";
      sol.report.primal_residual = p.max_violation(sol.z);
      return finish(sol);
    }
    z = run1.z.head(n);
    if (!bar.evaluate(z, pt)) {
      sol.z = z;
      sol.report.status = SolverStatus::numerical_failure;
      sol.report.message = "phase one point left the domain";
      return finish(sol);
    }
  }

  auto run = detail::barrier_method(p, z, opt, opt.rel_gap, true, [](const Eigen::VectorXd&) { return false; });
  sol.z = run.z;
  const double nu = std::max(bar.nu(), 1.0);
  sol.report.iterations = run.iterations + sol.report.phase_one_iterations;
  sol.report.objective = p.objective_value(run.z);
  const double gap = nu / run.t;
  sol.report.dual_bound = p.sense() == Sense::maximize ? sol.report.objective + gap : sol.report.objective - gap;
  sol.report.primal_residual = p.max_violation(run.z);
  sol.report.dual_residual = run.decrement;
  const double target = opt.rel_gap * std::max(1.0, std::abs(sol.report.objective));
  if (run.converged || (run.stalled && gap <= 10.0 * target)) {
    sol.report.status = sol.report.primal_residual <= opt.feas_tol ? SolverStatus::optimal
                                                                   : SolverStatus::numerical_failure;
    if (sol.report.status != SolverStatus::optimal) sol.report.message = "constraint residual above tolerance";
  } else if (run.iterations + sol.report.phase_one_iterations >= opt.max_iters ||
             run.iterations >= opt.max_iters) {
    sol.report.status = SolverStatus::max_iters;
    sol.report.message = "iteration limit reached";
  } else {
    sol.report.status = SolverStatus::numerical_failure;
    sol.report.message = "line search stalled before the gap target";
  }
  return finish(sol);
}

}  // namespace faisac::convex
