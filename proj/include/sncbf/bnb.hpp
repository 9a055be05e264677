#pragma once

// Interval branch-and-bound for  min objective(x)  s.t.  g_i(x) >= 0,
// |e_k(x)| <= eps_eq,  x in box.  Decide mode answers "min >= -delta?" with a
// certified bound or a pointwise-checked witness; optimize mode brackets the
// global minimum.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

#include "sncbf/expr.hpp"
#include "sncbf/interval.hpp"

namespace sncbf {

struct NlpProblem {
  Expr objective;
  std::vector<Expr> ineq;  // >= 0
  std::vector<Expr> eq;    // == 0, relaxed to a band
  Box box;
  // Optional improvement of a candidate witness (e.g. exact inner solve).
  std::function<void(std::vector<double>&)> refine;
};

struct BnbConfig {
  double delta = 1e-4;     // decide threshold
  double eps_eq = 1e-6;    // equality band
  long max_boxes = 1000000;
  double min_width = 1e-6;

  double delta_ce() const { return delta / 10.0; }
};

enum class BnbStatus { Valid, Counterexample, Unknown };

inline const char* to_string(BnbStatus s) {
  switch (s) {
    case BnbStatus::Valid: return "Valid";
    case BnbStatus::Counterexample: return "CounterexampleFound";
    case BnbStatus::Unknown: return "Unknown";
  }
  return "?";
}

struct BnbResult {
  BnbStatus status = BnbStatus::Unknown;
  double bound = std::numeric_limits<double>::infinity();  // certified lower bound on the minimum
  double upper = std::numeric_limits<double>::infinity();  // best feasible objective seen
  double gap = 0.0;
  std::vector<double> witness;
  double witness_value = 0.0;
  long boxes = 0;
};

class BranchAndBound {
 public:
  BranchAndBound(NlpProblem p, BnbConfig cfg) : p_(std::move(p)), cfg_(cfg), obj_(p_.objective) {
    for (const auto& g : p_.ineq) ineq_.emplace_back(g);
    for (const auto& e : p_.eq) eq_.emplace_back(e);
    for (const auto& iv : p_.box)
      if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi)) throw Error("branch and bound needs a bounded box");
  }

  // Pointwise feasibility with the equality band.
  bool feasible_point(const std::vector<double>& x) const {
    try {
      for (const auto& t : ineq_)
        if (!(t.eval_point(x) >= 0.0)) return false;
      for (const auto& t : eq_)
        if (!(std::fabs(t.eval_point(x)) <= cfg_.eps_eq)) return false;
    } catch (const DomainError&) {
      return false;
    }
    return true;
  }

  double objective_at(const std::vector<double>& x) const { return obj_.eval_point(x); }

  BnbResult decide() {
    BnbResult res;
    double discarded_lb = std::numeric_limits<double>::infinity();
    double undecided_lb = std::numeric_limits<double>::infinity();
    std::priority_queue<Node, std::vector<Node>, std::greater<>> queue;
    auto consider = [&](Box b) -> bool {  // returns true when a witness was found
      ++res.boxes;
      if (!contract_constraints(b)) return false;
      Interval ob;
      bool split_required = false;
      try {
        ob = obj_.eval_interval(b);
      } catch (const SplitRequired&) {
        ob = Interval::entire();
        split_required = true;
      }
      if (ob.lo >= -cfg_.delta) {
        discarded_lb = std::min(discarded_lb, ob.lo);
        return false;
      }
      if (!split_required && !obj_.contract(b, {-std::numeric_limits<double>::infinity(), -cfg_.delta})) {
        discarded_lb = std::min(discarded_lb, -cfg_.delta);
        return false;
      }
      if (try_witness(b, res)) return true;
      if (max_width(b) < cfg_.min_width) {
        undecided_lb = std::min(undecided_lb, ob.lo);
        return false;
      }
      queue.push({ob.lo, std::move(b)});
      return false;
    };
    if (consider(p_.box)) return res;
    while (!queue.empty()) {
      if (res.boxes >= cfg_.max_boxes) {
        res.status = BnbStatus::Unknown;
        res.bound = std::min({discarded_lb, undecided_lb, queue.top().lb});
        res.gap = -res.bound;
        return res;
      }
      Node n = queue.top();
      queue.pop();
      auto [left, right] = bisect(n.box);
      if (consider(std::move(left)) || consider(std::move(right))) return res;
    }
    if (undecided_lb < std::numeric_limits<double>::infinity()) {
      res.status = BnbStatus::Unknown;
      res.bound = std::min(discarded_lb, undecided_lb);
      res.gap = -res.bound;
      return res;
    }
    res.status = BnbStatus::Valid;
    res.bound = discarded_lb;
    return res;
  }

  // Brackets the minimum to within gap_tol. status Valid means the bracket
  // was closed; an infeasible problem returns bound = upper = +inf.
  BnbResult minimize(double gap_tol) {
    BnbResult res;
    double tiny_lb = std::numeric_limits<double>::infinity();
    std::priority_queue<Node, std::vector<Node>, std::greater<>> queue;
    auto consider = [&](Box b) {
      ++res.boxes;
      if (!contract_constraints(b)) return;
      Interval ob;
      try {
        ob = obj_.eval_interval(b);
      } catch (const SplitRequired&) {
        ob = Interval::entire();
      }
      record_candidates(b, res);
      if (ob.lo >= res.upper - gap_tol) return;
      if (max_width(b) < cfg_.min_width) {
        tiny_lb = std::min(tiny_lb, ob.lo);
        return;
      }
      queue.push({ob.lo, std::move(b)});
    };
    consider(p_.box);
    while (!queue.empty()) {
      const double lb = queue.top().lb;
      if (lb >= res.upper - gap_tol) break;
      if (res.boxes >= cfg_.max_boxes) {
        res.status = BnbStatus::Unknown;
        res.bound = std::min(lb, tiny_lb);
        res.gap = res.upper - res.bound;
        return res;
      }
      Node n = queue.top();
      queue.pop();
      auto [left, right] = bisect(n.box);
      consider(std::move(left));
      consider(std::move(right));
    }
    double lb = queue.empty() ? res.upper : std::min(queue.top().lb, res.upper);
    lb = std::min(lb, tiny_lb);
    res.bound = lb;
    res.gap = res.upper - lb;
    res.status = res.gap <= gap_tol || !std::isfinite(res.upper) ? BnbStatus::Valid : BnbStatus::Unknown;
    if (!std::isfinite(res.upper) && std::isfinite(tiny_lb)) res.status = BnbStatus::Unknown;
    return res;
  }

 private:
  struct Node {
    double lb;
    Box box;
    bool operator>(const Node& o) const { return lb > o.lb; }
  };

  static double max_width(const Box& b) {
    double w = 0.0;
    for (const auto& iv : b) w = std::max(w, iv.width());
    return w;
  }

  static std::pair<Box, Box> bisect(const Box& b) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < b.size(); ++i)
      if (b[i].width() > b[k].width()) k = i;
    Box l = b, r = b;
    const double m = b[k].mid();
    l[k].hi = m;
    r[k].lo = m;
    return {std::move(l), std::move(r)};
  }

  bool contract_constraints(Box& b) const {
    const Interval nonneg{0.0, std::numeric_limits<double>::infinity()};
    const Interval band{-cfg_.eps_eq, cfg_.eps_eq};
    for (int pass = 0; pass < 3; ++pass) {
      const double before = total_width(b);
      for (const auto& t : ineq_)
        if (!t.contract(b, nonneg)) return false;
      for (const auto& t : eq_)
        if (!t.contract(b, band)) return false;
      if (total_width(b) > 0.9 * before) break;
    }
    return true;
  }

  static double total_width(const Box& b) {
    double s = 0.0;
    for (const auto& iv : b) s += iv.width();
    return s;
  }

  std::vector<std::vector<double>> candidates(const Box& b) const {
    std::vector<double> mid(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) mid[i] = b[i].mid();
    std::vector<std::vector<double>> out;
    if (!eq_.empty()) {
      std::vector<double> proj = mid;
      project_equalities(proj, b);
      out.push_back(std::move(proj));
    }
    out.push_back(std::move(mid));
    if (p_.refine) {
      const std::size_t n = out.size();
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> r = out[i];
        p_.refine(r);
        out.push_back(std::move(r));
      }
    }
    return out;
  }

  bool try_witness(const Box& b, BnbResult& res) const {
    for (auto& x : candidates(b)) {
      if (!feasible_point(x)) continue;
      double v;
      try {
        v = objective_at(x);
      } catch (const DomainError&) {
        continue;
      }
      if (v < res.upper) res.upper = v;
      if (v < -cfg_.delta_ce()) {
        res.status = BnbStatus::Counterexample;
        res.witness = x;
        res.witness_value = v;
        res.bound = -std::numeric_limits<double>::infinity();
        return true;
      }
    }
    return false;
  }

  void record_candidates(const Box& b, BnbResult& res) const {
    for (auto& x : candidates(b)) {
      if (!feasible_point(x)) continue;
      double v;
      try {
        v = objective_at(x);
      } catch (const DomainError&) {
        continue;
      }
      if (v < res.upper) {
        res.upper = v;
        res.witness = x;
        res.witness_value = v;
      }
    }
  }

  // Minimum-norm Gauss-Newton steps toward {e(x) = 0}, clamped to the box.
  void project_equalities(std::vector<double>& x, const Box& b) const {
    const int n = static_cast<int>(x.size());
    const int m = static_cast<int>(eq_.size());
    for (int it = 0; it < 8; ++it) {
      Eigen::VectorXd e(m);
      Eigen::MatrixXd J(m, n);
      try {
        for (int k = 0; k < m; ++k) e(k) = eq_[k].eval_point(x);
        if (e.cwiseAbs().maxCoeff() <= 0.1 * cfg_.eps_eq) return;
        for (int i = 0; i < n; ++i) {
          const double h = 1e-7 * std::max(1.0, std::fabs(x[i]));
          std::vector<double> xp = x, xm = x;
          xp[i] += h;
          xm[i] -= h;
          for (int k = 0; k < m; ++k) J(k, i) = (eq_[k].eval_point(xp) - eq_[k].eval_point(xm)) / (2.0 * h);
        }
      } catch (const DomainError&) {
        return;
      }
      const Eigen::MatrixXd JJt = J * J.transpose();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(JJt);
      if (ldlt.info() != Eigen::Success || JJt.diagonal().maxCoeff() == 0.0) return;
      const Eigen::VectorXd step = J.transpose() * ldlt.solve(e);
      if (!step.allFinite()) return;
      for (int i = 0; i < n; ++i) x[i] = std::clamp(x[i] - step(i), b[i].lo, b[i].hi);
    }
  }

  NlpProblem p_;
  BnbConfig cfg_;
  Tape obj_;
  std::vector<Tape> ineq_;
  std::vector<Tape> eq_;
};

inline BnbResult branch_and_bound(const NlpProblem& p, const BnbConfig& cfg) { return BranchAndBound(p, cfg).decide(); }

}  // namespace sncbf
