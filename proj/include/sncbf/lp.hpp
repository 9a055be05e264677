#pragma once

// Dense two-phase simplex (Bland's rule) over box-bounded polytopes.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "sncbf/error.hpp"
#include "sncbf/interval.hpp"

namespace sncbf {

// {x in box : A x <= b}. Strict rows are solved as their closure.
struct Polytope {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<bool> strict;
  Box box;

  int dim() const { return static_cast<int>(box.size()); }
  int rows() const { return static_cast<int>(A.rows()); }

  explicit Polytope(Box bx = {}) : A(0, static_cast<Eigen::Index>(bx.size())), b(0), box(std::move(bx)) {}

  void add_row(const Eigen::VectorXd& a, double rhs, bool is_strict = false) {
    A.conservativeResize(A.rows() + 1, dim());
    b.conservativeResize(b.size() + 1);
    A.row(A.rows() - 1) = a.transpose();
    b(b.size() - 1) = rhs;
    strict.push_back(is_strict);
  }

  // Largest violation of any row or bound at x (<= 0 when x is inside).
  double violation(const Eigen::VectorXd& x) const {
    double v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < rows(); ++i) v = std::max(v, A.row(i).dot(x) - b(i));
    for (int j = 0; j < dim(); ++j) v = std::max({v, box[j].lo - x(j), x(j) - box[j].hi});
    return v;
  }
};

// Equality rows Aeq x = beq.
struct LinearEqualities {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

enum class LpStatus { Feasible, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd x;       // witness / optimizer
  double objective = 0.0;  // c.x at the optimizer

  bool feasible() const { return status == LpStatus::Feasible; }
};

inline constexpr double kLpTol = 1e-9;
inline constexpr long kLpIterationCap = 100000;

namespace detail {

class Simplex {
 public:
  // Tableau rows: T.row(i) . vars = rhs(i), rhs >= 0, basis(i) basic in row i.
  Eigen::MatrixXd T;
  Eigen::VectorXd rhs;
  std::vector<int> basis;

  // Minimizes cost . vars over the current tableau. Columns with allowed[j]
  // false never enter. Returns false when unbounded.
  bool optimize(const Eigen::VectorXd& cost, const std::vector<bool>& allowed) {
    const int m = static_cast<int>(T.rows());
    const int nv = static_cast<int>(T.cols());
    for (long iter = 0;; ++iter) {
      if (iter > kLpIterationCap) throw Error("LP stall");
      // Reduced costs c_j - c_B B^-1 A_j; tableau is kept in canonical form.
      int enter = -1;
      for (int j = 0; j < nv; ++j) {
        if (!allowed[j]) continue;
        double rc = cost(j);
        for (int i = 0; i < m; ++i) rc -= cost(basis[i]) * T(i, j);
        if (rc < -kLpTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i) {
        if (T(i, enter) > kLpTol) {
          const double ratio = rhs(i) / T(i, enter);
          if (ratio < best - 1e-12 || (std::fabs(ratio - best) <= 1e-12 && basis[i] < basis[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
  }

  void pivot(int r, int c) {
    const double p = T(r, c);
    T.row(r) /= p;
    rhs(r) /= p;
    for (int i = 0; i < T.rows(); ++i) {
      if (i == r) continue;
      const double f = T(i, c);
      if (f == 0.0) continue;
      T.row(i) -= f * T.row(r);
      rhs(i) -= f * rhs(r);
      if (rhs(i) < 0.0 && rhs(i) > -1e-12) rhs(i) = 0.0;
    }
    basis[r] = c;
  }
};

}  // namespace detail

// Minimizes cost . x over the polytope (and equalities). A null cost checks
// feasibility only. Phase-1 optimum <= kLpTol counts as feasible.
inline LpResult solve_lp(const Polytope& p, const LinearEqualities* eq = nullptr, const Eigen::VectorXd* cost = nullptr) {
  const int n = p.dim();
  for (const auto& iv : p.box) {
    if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi)) throw Error("LP requires a bounded box");
  }
  Eigen::VectorXd lo(n), width(n);
  for (int j = 0; j < n; ++j) {
    lo(j) = p.box[j].lo;
    width(j) = p.box[j].hi - p.box[j].lo;
    if (width(j) < 0.0) return {};
  }
  // Shifted variables s = x - lo >= 0. Inequalities: A s <= b - A lo, s <= width.
  const int m_in = p.rows() + n;
  const int m_eq = eq ? static_cast<int>(eq->A.rows()) : 0;
  const int m = m_in + m_eq;
  // Columns: n structural, m_in slacks, m artificials.
  const int nv = n + m_in + m;
  detail::Simplex s;
  s.T = Eigen::MatrixXd::Zero(m, nv);
  s.rhs = Eigen::VectorXd::Zero(m);
  s.basis.assign(m, -1);
  std::vector<bool> is_art(nv, false);
  for (int i = 0; i < m; ++i) {
    double r;
    if (i < p.rows()) {
      s.T.block(i, 0, 1, n) = p.A.row(i);
      r = p.b(i) - p.A.row(i).dot(lo);
      s.T(i, n + i) = 1.0;
    } else if (i < m_in) {
      const int j = i - p.rows();
      s.T(i, j) = 1.0;
      s.T(i, n + i) = 1.0;
      r = width(j);
    } else {
      const int k = i - m_in;
      s.T.block(i, 0, 1, n) = eq->A.row(k);
      r = eq->b(k) - eq->A.row(k).dot(lo);
    }
    if (r < 0.0) {
      s.T.row(i) *= -1.0;
      r = -r;
    }
    s.rhs(i) = r;
    const bool slack_basic = i < m_in && s.T(i, n + i) > 0.0;
    if (slack_basic) {
      s.basis[i] = n + i;
    } else {
      s.T(i, n + m_in + i) = 1.0;
      s.basis[i] = n + m_in + i;
      is_art[n + m_in + i] = true;
    }
  }
  // Phase 1.
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(nv);
  std::vector<bool> allowed(nv, true);
  for (int j = 0; j < nv; ++j) {
    if (is_art[j]) c1(j) = 1.0;
    if (j >= n + m_in && !is_art[j]) allowed[j] = false;
  }
  s.optimize(c1, allowed);
  double infeas = 0.0;
  for (int i = 0; i < m; ++i)
    if (is_art[s.basis[i]]) infeas += s.rhs(i);
  if (infeas > kLpTol) return {};
  // Drive remaining artificials out of the basis where possible.
  for (int i = 0; i < m; ++i) {
    if (!is_art[s.basis[i]]) continue;
    int col = -1;
    for (int j = 0; j < n + m_in; ++j)
      if (std::fabs(s.T(i, j)) > 1e-9) {
        col = j;
        break;
      }
    if (col >= 0) s.pivot(i, col);
  }
  for (int j = n + m_in; j < nv; ++j) allowed[j] = false;

  LpResult res;
  res.status = LpStatus::Feasible;
  if (cost) {
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(nv);
    c2.head(n) = *cost;
    if (!s.optimize(c2, allowed)) {
      res.status = LpStatus::Unbounded;
    }
  }
  Eigen::VectorXd sv = Eigen::VectorXd::Zero(nv);
  for (int i = 0; i < m; ++i) sv(s.basis[i]) = s.rhs(i);
  res.x = lo + sv.head(n);
  for (int j = 0; j < n; ++j) res.x(j) = std::clamp(res.x(j), p.box[j].lo, p.box[j].hi);
  if (cost) res.objective = cost->dot(res.x);
  return res;
}

// Feasibility of the polytope with additional rows extra_A x <= extra_b.
inline LpResult lp_feasible(const Polytope& p, const Eigen::MatrixXd& extra_A = {}, const Eigen::VectorXd& extra_b = {}) {
  if (extra_A.rows() == 0) return solve_lp(p);
  Polytope q = p;
  for (int i = 0; i < extra_A.rows(); ++i) q.add_row(extra_A.row(i).transpose(), extra_b(i));
  return solve_lp(q);
}

// min / max of c.x over the polytope; status Infeasible when empty.
inline LpResult lp_minimize(const Polytope& p, const Eigen::VectorXd& c, const LinearEqualities* eq = nullptr) {
  return solve_lp(p, eq, &c);
}
inline LpResult lp_maximize(const Polytope& p, const Eigen::VectorXd& c, const LinearEqualities* eq = nullptr) {
  Eigen::VectorXd neg = -c;
  LpResult r = solve_lp(p, eq, &neg);
  r.objective = -r.objective;
  return r;
}

// Tightest axis-aligned box containing the polytope, or nullopt-like empty
// vector when infeasible.
inline Box bounding_box(const Polytope& p, const LinearEqualities* eq = nullptr) {
  Box out(p.dim());
  for (int j = 0; j < p.dim(); ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Unit(p.dim(), j);
    LpResult lo = lp_minimize(p, e, eq);
    if (!lo.feasible()) return {};
    LpResult hi = lp_maximize(p, e, eq);
    out[j] = {std::max(p.box[j].lo, lo.objective - 1e-9), std::min(p.box[j].hi, hi.objective + 1e-9)};
  }
  return out;
}

}  // namespace sncbf
