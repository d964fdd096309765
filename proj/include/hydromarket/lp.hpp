#pragma once

// Dense bounded-variable revised simplex.
//
// Every model in the library (dispatch, market clearing, agent recursions,
// bid allocation) is a small LP; the solver keeps an explicit basis inverse,
// prices with Dantzig's rule, and falls back to Bland's rule after a run of
// degenerate pivots. Duals are reported as d(objective)/d(rhs) in the LP's own
// sense, so a "load balance" dual is directly a price.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hydromarket {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Sense { Minimize, Maximize };
enum class Relation { LessEqual, Equal, GreaterEqual };
enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct Term {
  int var;
  double coef;
};

class LpError : public std::runtime_error {
 public:
  LpError(const std::string& what, int iterations)
      : std::runtime_error(what + " after " + std::to_string(iterations) + " simplex iterations"),
        iterations_(iterations) {}
  int iterations() const { return iterations_; }

 private:
  int iterations_;
};

class LinearProgram {
 public:
  struct Variable {
    std::string name;
    double lower;
    double upper;
    double cost;
  };
  struct Constraint {
    std::string name;
    std::vector<Term> terms;
    Relation relation;
    double rhs;
  };

  explicit LinearProgram(Sense sense = Sense::Minimize) : sense_(sense) {}

  int add_variable(std::string name, double lower, double upper, double cost = 0.0) {
    if (!(lower <= upper) || std::isnan(cost) || std::isinf(cost))
      throw std::invalid_argument("variable '" + name + "': invalid bounds or cost");
    variables_.push_back({std::move(name), lower, upper, cost});
    return static_cast<int>(variables_.size()) - 1;
  }

  int add_constraint(std::string name, std::vector<Term> terms, Relation relation, double rhs) {
    for (const auto& t : terms) {
      if (t.var < 0 || t.var >= num_variables())
        throw std::invalid_argument("constraint '" + name + "' references unknown variable");
      if (!std::isfinite(t.coef))
        throw std::invalid_argument("constraint '" + name + "' has a non-finite coefficient");
    }
    if (!std::isfinite(rhs)) throw std::invalid_argument("constraint '" + name + "' has non-finite rhs");
    constraints_.push_back({std::move(name), std::move(terms), relation, rhs});
    return static_cast<int>(constraints_.size()) - 1;
  }

  void set_cost(int var, double cost) { variables_.at(var).cost = cost; }
  void set_bounds(int var, double lower, double upper) {
    if (!(lower <= upper)) throw std::invalid_argument("set_bounds: lower > upper");
    variables_.at(var).lower = lower;
    variables_.at(var).upper = upper;
  }
  void set_rhs(int row, double rhs) { constraints_.at(row).rhs = rhs; }
  void set_sense(Sense s) { sense_ = s; }

  Sense sense() const { return sense_; }
  int num_variables() const { return static_cast<int>(variables_.size()); }
  int num_constraints() const { return static_cast<int>(constraints_.size()); }
  const Variable& variable(int j) const { return variables_.at(j); }
  const Constraint& constraint(int i) const { return constraints_.at(i); }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<Constraint>& constraints() const { return constraints_; }

  std::optional<int> find_constraint(std::string_view name) const {
    for (int i = 0; i < num_constraints(); ++i)
      if (constraints_[i].name == name) return i;
    return std::nullopt;
  }
  std::optional<int> find_variable(std::string_view name) const {
    for (int j = 0; j < num_variables(); ++j)
      if (variables_[j].name == name) return j;
    return std::nullopt;
  }

 private:
  Sense sense_;
  std::vector<Variable> variables_;
  std::vector<Constraint> constraints_;
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  double objective = 0.0;
  std::vector<double> primal;
  std::vector<double> dual;          // d(objective)/d(rhs), per constraint
  std::vector<double> reduced_cost;  // per variable, in the LP's own sense
  int iterations = 0;

  bool optimal() const { return status == LpStatus::Optimal; }
};

struct SimplexOptions {
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-7;
  double pivot_tol = 1e-9;
  int refactor_interval = 64;
  int degenerate_before_bland = 50;
  int max_iterations = 0;  // 0: 200 * (rows + columns) + 1000
};

namespace detail {

class RevisedSimplex {
 public:
  RevisedSimplex(const LinearProgram& lp, const SimplexOptions& opt) : lp_(lp), opt_(opt) {
    m_ = lp.num_constraints();
    n_ = lp.num_variables();
    const double sign = lp.sense() == Sense::Maximize ? -1.0 : 1.0;

    // Column-compressed structural matrix.
    std::vector<int> count(n_ + 1, 0);
    for (const auto& c : lp.constraints())
      for (const auto& t : c.terms) ++count[t.var + 1];
    for (int j = 0; j < n_; ++j) count[j + 1] += count[j];
    col_start_ = count;
    row_idx_.assign(col_start_[n_], 0);
    val_.assign(col_start_[n_], 0.0);
    std::vector<int> fill(col_start_.begin(), col_start_.end() - 1);
    for (int i = 0; i < m_; ++i)
      for (const auto& t : lp.constraint(i).terms) {
        row_idx_[fill[t.var]] = i;
        val_[fill[t.var]] = t.coef;
        ++fill[t.var];
      }

    b_.resize(m_);
    for (int i = 0; i < m_; ++i) b_[i] = lp.constraint(i).rhs;

    const int total = n_ + 2 * m_;  // structurals, slacks, artificials
    lo_.assign(total, 0.0);
    up_.assign(total, 0.0);
    cost_.assign(total, 0.0);
    x_.assign(total, 0.0);
    pos_.assign(total, -1);
    art_sign_.assign(m_, 1.0);
    for (int j = 0; j < n_; ++j) {
      lo_[j] = lp.variable(j).lower;
      up_[j] = lp.variable(j).upper;
      cost_[j] = sign * lp.variable(j).cost;
    }
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      switch (lp.constraint(i).relation) {
        case Relation::LessEqual: lo_[s] = 0.0; up_[s] = kInf; break;
        case Relation::GreaterEqual: lo_[s] = -kInf; up_[s] = 0.0; break;
        case Relation::Equal: lo_[s] = 0.0; up_[s] = 0.0; break;
      }
      // Artificials start fixed at zero and are only opened for infeasible rows.
      lo_[n_ + m_ + i] = 0.0;
      up_[n_ + m_ + i] = 0.0;
    }
    max_iter_ = opt.max_iterations > 0 ? opt.max_iterations : 200 * (m_ + n_) + 1000;
  }

  LpSolution solve() {
    LpSolution sol;
    initial_basis();
    bool need_phase1 = false;
    for (int i = 0; i < m_; ++i)
      if (basis_[i] >= n_ + m_) need_phase1 = true;

    if (need_phase1) {
      std::vector<double> c1(cost_.size(), 0.0);
      for (int i = 0; i < m_; ++i) c1[n_ + m_ + i] = 1.0;
      const auto st = iterate(c1);
      if (st == LpStatus::Unbounded) throw LpError("phase 1 reported unbounded", iterations_);
      double infeas = 0.0, bnorm = 0.0;
      for (int i = 0; i < m_; ++i) {
        infeas += x_[n_ + m_ + i];
        bnorm = std::max(bnorm, std::abs(b_[i]));
      }
      if (infeas > opt_.feasibility_tol * (1.0 + bnorm)) {
        sol.status = LpStatus::Infeasible;
        sol.iterations = iterations_;
        return sol;
      }
      for (int i = 0; i < m_; ++i) {
        const int a = n_ + m_ + i;
        up_[a] = 0.0;
        if (pos_[a] < 0) x_[a] = 0.0;
      }
      drive_out_artificials();
    }

    const auto st = iterate(cost_);
    sol.iterations = iterations_;
    if (st == LpStatus::Unbounded) {
      sol.status = LpStatus::Unbounded;
      return sol;
    }
    sol.status = LpStatus::Optimal;
    const double sign = lp_.sense() == Sense::Maximize ? -1.0 : 1.0;
    sol.primal.assign(x_.begin(), x_.begin() + n_);
    compute_duals(cost_);
    sol.dual.resize(m_);
    for (int i = 0; i < m_; ++i) sol.dual[i] = sign * y_[i];
    sol.reduced_cost.resize(n_);
    for (int j = 0; j < n_; ++j) sol.reduced_cost[j] = sign * reduced_cost(cost_, j);
    double obj = 0.0;
    for (int j = 0; j < n_; ++j) obj += lp_.variable(j).cost * x_[j];
    sol.objective = obj;
    return sol;
  }

 private:
  enum class Status : unsigned char { Basic, AtLower, AtUpper, Free };

  // Column access --------------------------------------------------------
  template <class F>
  void for_column(int j, F&& f) const {
    if (j < n_) {
      for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) f(row_idx_[k], val_[k]);
    } else if (j < n_ + m_) {
      f(j - n_, 1.0);
    } else {
      f(j - n_ - m_, art_sign_[j - n_ - m_]);
    }
  }

  double& binv(int i, int k) { return binv_[static_cast<std::size_t>(i) * m_ + k]; }

  void initial_basis() {
    const int total = n_ + 2 * m_;
    status_.assign(total, Status::AtLower);
    for (int j = 0; j < n_ + m_; ++j) {
      if (std::isfinite(lo_[j])) {
        x_[j] = lo_[j];
        status_[j] = Status::AtLower;
      } else if (std::isfinite(up_[j])) {
        x_[j] = up_[j];
        status_[j] = Status::AtUpper;
      } else {
        x_[j] = 0.0;
        status_[j] = Status::Free;
      }
    }
    std::vector<double> r = b_;
    for (int j = 0; j < n_; ++j) {
      if (x_[j] == 0.0) continue;
      for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) r[row_idx_[k]] -= val_[k] * x_[j];
    }
    basis_.assign(m_, -1);
    binv_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const int s = n_ + i;
      const int a = n_ + m_ + i;
      x_[a] = 0.0;
      status_[a] = Status::AtLower;
      if (r[i] >= lo_[s] - opt_.feasibility_tol && r[i] <= up_[s] + opt_.feasibility_tol) {
        basis_[i] = s;
        x_[s] = r[i];
        binv(i, i) = 1.0;
      } else {
        const double bound = r[i] < lo_[s] ? lo_[s] : up_[s];
        x_[s] = bound;
        status_[s] = bound == lo_[s] ? Status::AtLower : Status::AtUpper;
        const double diff = r[i] - bound;
        art_sign_[i] = diff >= 0.0 ? 1.0 : -1.0;
        up_[a] = kInf;
        x_[a] = std::abs(diff);
        basis_[i] = a;
        binv(i, i) = art_sign_[i];
      }
    }
    for (int i = 0; i < m_; ++i) {
      pos_[basis_[i]] = i;
      status_[basis_[i]] = Status::Basic;
    }
  }

  void refactor() {
    // Gauss-Jordan inversion of the basis matrix with partial pivoting.
    std::vector<double> a(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i)
      for_column(basis_[i], [&](int row, double v) { a[static_cast<std::size_t>(row) * m_ + i] = v; });
    std::vector<double>& inv = binv_;
    std::fill(inv.begin(), inv.end(), 0.0);
    for (int i = 0; i < m_; ++i) inv[static_cast<std::size_t>(i) * m_ + i] = 1.0;
    for (int col = 0; col < m_; ++col) {
      int piv = col;
      double best = std::abs(a[static_cast<std::size_t>(col) * m_ + col]);
      for (int r = col + 1; r < m_; ++r) {
        const double v = std::abs(a[static_cast<std::size_t>(r) * m_ + col]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (best < 1e-12) throw LpError("singular basis during refactorization", iterations_);
      if (piv != col) {
        for (int k = 0; k < m_; ++k) {
          std::swap(a[static_cast<std::size_t>(piv) * m_ + k], a[static_cast<std::size_t>(col) * m_ + k]);
          std::swap(inv[static_cast<std::size_t>(piv) * m_ + k], inv[static_cast<std::size_t>(col) * m_ + k]);
        }
      }
      const double d = a[static_cast<std::size_t>(col) * m_ + col];
      for (int k = 0; k < m_; ++k) {
        a[static_cast<std::size_t>(col) * m_ + k] /= d;
        inv[static_cast<std::size_t>(col) * m_ + k] /= d;
      }
      for (int r = 0; r < m_; ++r) {
        if (r == col) continue;
        const double f = a[static_cast<std::size_t>(r) * m_ + col];
        if (f == 0.0) continue;
        for (int k = 0; k < m_; ++k) {
          a[static_cast<std::size_t>(r) * m_ + k] -= f * a[static_cast<std::size_t>(col) * m_ + k];
          inv[static_cast<std::size_t>(r) * m_ + k] -= f * inv[static_cast<std::size_t>(col) * m_ + k];
        }
      }
    }
    std::vector<double> rhs = b_;
    for (int j = 0; j < n_ + 2 * m_; ++j) {
      if (pos_[j] >= 0 || x_[j] == 0.0) continue;
      for_column(j, [&](int row, double v) { rhs[row] -= v * x_[j]; });
    }
    for (int i = 0; i < m_; ++i) {
      double s = 0.0;
      for (int k = 0; k < m_; ++k) s += binv(i, k) * rhs[k];
      x_[basis_[i]] = s;
    }
  }

  void compute_duals(const std::vector<double>& c) {
    y_.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      const double* row = &binv_[static_cast<std::size_t>(i) * m_];
      for (int k = 0; k < m_; ++k) y_[k] += cb * row[k];
    }
  }

  double reduced_cost(const std::vector<double>& c, int j) const {
    double d = c[j];
    for_column(j, [&](int row, double v) { d -= y_[row] * v; });
    return d;
  }

  LpStatus iterate(const std::vector<double>& c) {
    refactor();
    compute_duals(c);
    int since_refactor = 0;
    int degenerate_run = 0;
    bool bland = false;
    std::vector<double> alpha(m_);
    const int total = n_ + 2 * m_;

    while (true) {
      if (iterations_ >= max_iter_) throw LpError("iteration limit reached", iterations_);
      if (since_refactor >= opt_.refactor_interval) {
        refactor();
        compute_duals(c);
        since_refactor = 0;
      }

      // Pricing.
      int q = -1;
      double best = 0.0, dq = 0.0;
      for (int j = 0; j < total; ++j) {
        const Status st = status_[j];
        if (st == Status::Basic) continue;
        if (lo_[j] == up_[j]) continue;
        const double d = reduced_cost(c, j);
        double score = 0.0;
        if (st == Status::AtLower && d < -opt_.optimality_tol) score = -d;
        else if (st == Status::AtUpper && d > opt_.optimality_tol) score = d;
        else if (st == Status::Free && std::abs(d) > opt_.optimality_tol) score = std::abs(d);
        if (score <= 0.0) continue;
        if (bland) {
          q = j;
          dq = d;
          break;
        }
        if (score > best) {
          best = score;
          q = j;
          dq = d;
        }
      }
      if (q < 0) return LpStatus::Optimal;

      const double dir = dq < 0.0 ? 1.0 : -1.0;
      std::fill(alpha.begin(), alpha.end(), 0.0);
      for_column(q, [&](int row, double v) {
        for (int i = 0; i < m_; ++i) alpha[i] += binv(i, row) * v;
      });

      // Two-pass ratio test (Harris): bound distances relaxed by the
      // feasibility tolerance, then the largest pivot among candidates.
      const double tol = opt_.feasibility_tol;
      double theta_relaxed = kInf;
      for (int i = 0; i < m_; ++i) {
        const double delta = dir * alpha[i];
        if (std::abs(delta) <= opt_.pivot_tol) continue;
        const int j = basis_[i];
        double lim = kInf;
        if (delta > 0.0 && std::isfinite(lo_[j])) lim = (x_[j] - lo_[j] + tol) / delta;
        else if (delta < 0.0 && std::isfinite(up_[j])) lim = (up_[j] - x_[j] + tol) / -delta;
        theta_relaxed = std::min(theta_relaxed, lim);
      }
      int leave = -1;
      double theta = kInf, best_pivot = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double delta = dir * alpha[i];
        if (std::abs(delta) <= opt_.pivot_tol) continue;
        const int j = basis_[i];
        double ratio = kInf;
        if (delta > 0.0 && std::isfinite(lo_[j])) ratio = (x_[j] - lo_[j]) / delta;
        else if (delta < 0.0 && std::isfinite(up_[j])) ratio = (up_[j] - x_[j]) / -delta;
        if (!std::isfinite(ratio) || ratio > theta_relaxed) continue;
        ratio = std::max(ratio, 0.0);
        if (bland) {
          if (leave < 0 || ratio < theta - 1e-12 || (ratio <= theta + 1e-12 && j < basis_[leave])) {
            leave = i;
            theta = ratio;
          }
        } else if (std::abs(delta) > best_pivot) {
          best_pivot = std::abs(delta);
          leave = i;
          theta = ratio;
        }
      }
      const double range = up_[q] - lo_[q];
      const bool flip = std::isfinite(range) && range <= theta;
      if (!flip && leave < 0) return LpStatus::Unbounded;
      const double step = flip ? range : theta;

      ++iterations_;
      ++since_refactor;
      if (step <= 1e-12) {
        if (++degenerate_run > opt_.degenerate_before_bland) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      if (step != 0.0) {
        x_[q] += dir * step;
        for (int i = 0; i < m_; ++i)
          if (alpha[i] != 0.0) x_[basis_[i]] -= dir * step * alpha[i];
      }

      if (flip) {
        x_[q] = dir > 0.0 ? up_[q] : lo_[q];
        status_[q] = dir > 0.0 ? Status::AtUpper : Status::AtLower;
        continue;
      }

      const int out = basis_[leave];
      const double delta_out = dir * alpha[leave];
      if (delta_out > 0.0) {
        x_[out] = lo_[out];
        status_[out] = Status::AtLower;
      } else {
        x_[out] = up_[out];
        status_[out] = Status::AtUpper;
      }
      if (lo_[out] == up_[out]) status_[out] = Status::AtLower;

      // Dual update uses the old row of B^{-1}.
      const double ratio = dq / alpha[leave];
      {
        const double* row = &binv_[static_cast<std::size_t>(leave) * m_];
        for (int k = 0; k < m_; ++k) y_[k] += ratio * row[k];
      }
      pivot(leave, alpha);
      pos_[out] = -1;
      basis_[leave] = q;
      pos_[q] = leave;
      status_[q] = Status::Basic;
    }
  }

  void pivot(int r, const std::vector<double>& alpha) {
    double* prow = &binv_[static_cast<std::size_t>(r) * m_];
    const double inv = 1.0 / alpha[r];
    for (int k = 0; k < m_; ++k) prow[k] *= inv;
    for (int i = 0; i < m_; ++i) {
      if (i == r || alpha[i] == 0.0) continue;
      double* row = &binv_[static_cast<std::size_t>(i) * m_];
      const double f = alpha[i];
      for (int k = 0; k < m_; ++k) row[k] -= f * prow[k];
    }
  }

  // Pivots zero-valued basic artificials out where a replacement column
  // exists; rows without one are redundant and keep a fixed artificial.
  void drive_out_artificials() {
    std::vector<double> alpha(m_);
    for (int r = 0; r < m_; ++r) {
      const int a = basis_[r];
      if (a < n_ + m_) continue;
      const double* row = &binv_[static_cast<std::size_t>(r) * m_];
      int q = -1;
      double best = 1e-7;
      for (int j = 0; j < n_ + m_; ++j) {
        if (pos_[j] >= 0) continue;
        double v = 0.0;
        for_column(j, [&](int rr, double c) { v += row[rr] * c; });
        if (std::abs(v) > best) {
          best = std::abs(v);
          q = j;
        }
      }
      if (q < 0) continue;
      std::fill(alpha.begin(), alpha.end(), 0.0);
      for_column(q, [&](int rr, double v) {
        for (int i = 0; i < m_; ++i) alpha[i] += binv(i, rr) * v;
      });
      pivot(r, alpha);
      pos_[a] = -1;
      status_[a] = Status::AtLower;
      x_[a] = 0.0;
      basis_[r] = q;
      pos_[q] = r;
      status_[q] = Status::Basic;
    }
  }

  const LinearProgram& lp_;
  SimplexOptions opt_;
  int m_ = 0, n_ = 0;
  std::vector<int> col_start_, row_idx_;
  std::vector<double> val_;
  std::vector<double> b_, lo_, up_, cost_, x_, y_, art_sign_;
  std::vector<int> basis_, pos_;
  std::vector<Status> status_;
  std::vector<double> binv_;
  int iterations_ = 0;
  int max_iter_ = 0;
};

}  // namespace detail

/// Solves the LP. Infeasible and unbounded problems are reported through the
/// status; numerical breakdown throws LpError with the iteration count.
inline LpSolution solve(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  detail::RevisedSimplex simplex(lp, opt);
  return simplex.solve();
}

/// Re-solves with the rhs of `row` shifted by `delta`.
inline LpSolution perturb_rhs(const LinearProgram& lp, int row, double delta,
                              const SimplexOptions& opt = {}) {
  LinearProgram copy = lp;
  copy.set_rhs(row, lp.constraint(row).rhs + delta);
  return solve(copy, opt);
}

inline LpSolution perturb_rhs(const LinearProgram& lp, std::string_view row, double delta,
                              const SimplexOptions& opt = {}) {
  const auto idx = lp.find_constraint(row);
  if (!idx) throw std::invalid_argument("perturb_rhs: unknown constraint '" + std::string(row) + "'");
  return perturb_rhs(lp, *idx, delta, opt);
}

/// Dual of the named constraint; throws when absent.
inline double dual_of(const LinearProgram& lp, const LpSolution& sol, std::string_view row) {
  const auto idx = lp.find_constraint(row);
  if (!idx) throw std::invalid_argument("unknown constraint '" + std::string(row) + "'");
  return sol.dual.at(*idx);
}

/// Objective of the dual problem: b'y plus the bound terms of the reduced costs.
inline double dual_objective(const LinearProgram& lp, const LpSolution& sol) {
  double z = 0.0;
  for (int i = 0; i < lp.num_constraints(); ++i) z += lp.constraint(i).rhs * sol.dual[i];
  for (int j = 0; j < lp.num_variables(); ++j) {
    const double d = sol.reduced_cost[j];
    if (d == 0.0) continue;
    const auto& v = lp.variable(j);
    const double x = sol.primal[j];
    // Reduced costs only carry weight for variables resting on a bound.
    if (std::isfinite(v.lower) && std::abs(x - v.lower) <= 1e-9 * (1.0 + std::abs(v.lower))) z += d * v.lower;
    else if (std::isfinite(v.upper) && std::abs(x - v.upper) <= 1e-9 * (1.0 + std::abs(v.upper))) z += d * v.upper;
    else z += d * x;
  }
  return z;
}

// ---------------------------------------------------------------------------
// CPLEX-LP text export (numbers with 12 significant digits).

namespace detail {

inline std::string lp_name(const std::string& raw, char prefix, int index) {
  if (raw.empty()) return std::string(1, prefix) + std::to_string(index);
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                    ch == '_' || ch == '.' || ch == '(' || ch == ')';
    out.push_back(ok ? ch : '_');
  }
  if (out[0] >= '0' && out[0] <= '9') out.insert(out.begin(), prefix);
  return out;
}

inline std::string lp_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void lp_terms(std::ostream& os, const LinearProgram& lp, const std::vector<Term>& terms,
                     const std::vector<std::string>& names) {
  bool first = true;
  for (const auto& t : terms) {
    if (t.coef == 0.0) continue;
    const double mag = std::abs(t.coef);
    os << (t.coef < 0 ? (first ? "- " : " - ") : (first ? "" : " + "));
    if (mag != 1.0) os << lp_number(mag) << ' ';
    os << names[t.var];
    first = false;
  }
  if (first) os << "0 " << (lp.num_variables() ? names[0] : std::string("x0"));
}

}  // namespace detail

inline void write_lp(std::ostream& os, const LinearProgram& lp) {
  std::vector<std::string> vn(lp.num_variables());
  for (int j = 0; j < lp.num_variables(); ++j) vn[j] = detail::lp_name(lp.variable(j).name, 'x', j);
  os << (lp.sense() == Sense::Minimize ? "Minimize\n" : "Maximize\n") << " obj: ";
  std::vector<Term> obj;
  for (int j = 0; j < lp.num_variables(); ++j)
    if (lp.variable(j).cost != 0.0) obj.push_back({j, lp.variable(j).cost});
  detail::lp_terms(os, lp, obj, vn);
  os << "\nSubject To\n";
  for (int i = 0; i < lp.num_constraints(); ++i) {
    const auto& c = lp.constraint(i);
    os << ' ' << detail::lp_name(c.name, 'c', i) << ": ";
    detail::lp_terms(os, lp, c.terms, vn);
    os << (c.relation == Relation::LessEqual ? " <= " : c.relation == Relation::Equal ? " = " : " >= ")
       << detail::lp_number(c.rhs) << '\n';
  }
  os << "Bounds\n";
  for (int j = 0; j < lp.num_variables(); ++j) {
    const auto& v = lp.variable(j);
    if (!std::isfinite(v.lower) && !std::isfinite(v.upper)) {
      os << ' ' << vn[j] << " free\n";
      continue;
    }
    os << ' ' << (std::isfinite(v.lower) ? detail::lp_number(v.lower) : std::string("-inf")) << " <= " << vn[j]
       << " <= " << (std::isfinite(v.upper) ? detail::lp_number(v.upper) : std::string("+inf")) << '\n';
  }
  os << "End\n";
}

}  // namespace hydromarket
