#pragma once

// Correctness and feasibility verification for smooth and ReLU barriers.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "sncbf/bnb.hpp"
#include "sncbf/enumerate.hpp"
#include "sncbf/generator.hpp"
#include "sncbf/lp.hpp"
#include "sncbf/net_expr.hpp"
#include "sncbf/nn.hpp"
#include "sncbf/system.hpp"

namespace sncbf {

enum class VerifyStatus { Valid, CounterexampleFound, Unknown };
enum class ViolationKind { None, Correctness, Feasibility };

inline const char* to_string(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::Valid: return "Valid";
    case VerifyStatus::CounterexampleFound: return "CounterexampleFound";
    case VerifyStatus::Unknown: return "Unknown";
  }
  return "?";
}
inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::None: return "none";
    case ViolationKind::Correctness: return "correctness";
    case ViolationKind::Feasibility: return "feasibility";
  }
  return "?";
}

struct RegionReport {
  std::string region;  // activation pattern, or "all" for smooth nets
  std::string check;   // "correctness" / "feasibility"
  std::string level;   // program used: "14", "16", "cor1", "18", "22", "21", "19"
  VerifyStatus status = VerifyStatus::Valid;
  double bound = 0.0;
  long boxes = 0;
};

struct VerificationOutcome {
  VerifyStatus status = VerifyStatus::Valid;
  ViolationKind kind = ViolationKind::None;
  Eigen::VectorXd counterexample;
  double certified_bound = std::numeric_limits<double>::infinity();
  double gap = 0.0;
  std::vector<RegionReport> regions;

  bool valid() const { return status == VerifyStatus::Valid; }
};

// Largest value of lambda . u over the input box (unbounded input: +inf
// unless lambda = 0).
inline double support_value(const Eigen::VectorXd& lambda, const InputSet& U) {
  if (lambda.size() == 0) return 0.0;
  if (!U.bounded()) return lambda.isZero(0.0) ? 0.0 : std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) s += std::max(lambda(i) * (*U.box)[i].lo, lambda(i) * (*U.box)[i].hi);
  return s;
}

// Pointwise infeasibility of lambda . u + xi >= 0 over U. For unbounded input
// the equality band decides whether lambda counts as zero.
inline bool pointwise_infeasible(const GeneratorTerms& t, const InputSet& U, double eps_eq, double margin) {
  if (!U.bounded() && t.lambda.size() > 0) return t.lambda.cwiseAbs().maxCoeff() <= eps_eq && t.xi < -margin;
  return t.xi + support_value(t.lambda, U) < -margin;
}

namespace detail {

// Normalized Farkas value min_y y'Ξ over {y >= 0, sum y = 1, A'y_A = y0 λ}
// for a box input set; the inner minimum over y in closed form is
// (ξ + max_u λ.u) / (1 + |λ|_1).
inline Expr farkas_box_objective(const std::vector<Expr>& lambda, const Expr& xi, const Box& U) {
  Expr num = xi;
  Expr norm = Expr::constant(1.0);
  for (std::size_t i = 0; i < lambda.size(); ++i) {
    num = num + max(U[i].lo * lambda[i], U[i].hi * lambda[i]);
    norm = norm + abs(lambda[i]);
  }
  return num / norm;
}

inline bool is_affine(const Expr& e) {
  switch (e.op()) {
    case Op::Const:
    case Op::Var: return true;
    case Op::Add:
    case Op::Sub: return is_affine(e.child(0)) && is_affine(e.child(1));
    case Op::Neg: return is_affine(e.child(0));
    case Op::Mul:
      return (e.child(0).is_constant() && is_affine(e.child(1))) || (e.child(1).is_constant() && is_affine(e.child(0)));
    default: return false;
  }
}

// Coefficients of an affine expression: e(x) = w.x + c.
inline std::pair<Eigen::VectorXd, double> affine_coeffs(const Expr& e, int n) {
  std::vector<double> z(n, 0.0);
  const double c = eval_point(e, z);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    z[i] = 1.0;
    w(i) = eval_point(e, z) - c;
    z[i] = 0.0;
  }
  return {w, c};
}

inline std::vector<Expr> polytope_constraints(const Polytope& p) {
  const std::vector<Expr> x = state_vars(p.dim());
  std::vector<Expr> out;
  for (int i = 0; i < p.rows(); ++i) out.push_back(affine_expr(-p.A.row(i), p.b(i), x));
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void merge_region(VerificationOutcome& out, const RegionReport& r) {
  out.regions.push_back(r);
  if (r.status != VerifyStatus::CounterexampleFound) out.certified_bound = std::min(out.certified_bound, r.bound);
  if (r.status == VerifyStatus::Unknown && out.status == VerifyStatus::Valid) {
    out.status = VerifyStatus::Unknown;
    out.gap = std::max(out.gap, -r.bound);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Smooth networks

inline VerificationOutcome verify_correctness_smooth(const Mlp& net, const RegionSpec& regions, const BnbConfig& cfg) {
  NlpProblem p;
  p.objective = regions.h;
  p.ineq = {output_expr(net)};
  p.box = regions.X;
  BnbResult r = branch_and_bound(p, cfg);
  VerificationOutcome out;
  RegionReport rep{"all", "correctness", "14", VerifyStatus::Valid, r.bound, r.boxes};
  if (r.status == BnbStatus::Counterexample) {
    const Eigen::VectorXd x = detail::to_eigen(r.witness);
    if (net.forward(x) >= 0.0 && regions.h_value(x) < -cfg.delta_ce()) {
      out.status = VerifyStatus::CounterexampleFound;
      out.kind = ViolationKind::Correctness;
      out.counterexample = x;
      rep.status = VerifyStatus::CounterexampleFound;
      rep.bound = r.witness_value;
      out.regions.push_back(rep);
      return out;
    }
    r.status = BnbStatus::Unknown;
  }
  if (r.status == BnbStatus::Unknown) rep.status = VerifyStatus::Unknown;
  detail::merge_region(out, rep);
  return out;
}

inline VerificationOutcome verify_feasibility_smooth(const Mlp& net, const StochasticAffineSystem& sys, double k,
                                                     const InputSet& U, const Box& X, const BnbConfig& cfg) {
  const NetExprs ne = smooth_net_exprs(net, sys.V);
  const int n = sys.n_x;
  Expr xi = ne.half_trace + k * ne.B;
  for (int i = 0; i < n; ++i) xi = xi + ne.grad[i] * sys.f[i];
  std::vector<Expr> lambda;
  for (int m = 0; m < sys.n_u; ++m) {
    Expr l = Expr::constant(0.0);
    for (int i = 0; i < n; ++i) l = l + ne.grad[i] * sys.g[i][m];
    lambda.push_back(l);
  }
  NlpProblem p;
  p.ineq = {ne.B};
  p.box = X;
  std::string level;
  if (sys.n_u == 0) {
    p.objective = xi;
    level = "16";
  } else if (!U.bounded()) {
    p.objective = xi;
    p.eq = lambda;
    level = "cor1";
  } else {
    p.objective = detail::farkas_box_objective(lambda, xi, *U.box);
    level = "16";
  }
  BnbResult r = branch_and_bound(p, cfg);
  VerificationOutcome out;
  RegionReport rep{"all", "feasibility", level, VerifyStatus::Valid, r.bound, r.boxes};
  if (r.status == BnbStatus::Counterexample) {
    const Eigen::VectorXd x = detail::to_eigen(r.witness);
    if (net.forward(x) >= 0.0 && pointwise_infeasible(lambda_xi_smooth(net, sys, k, x), U, cfg.eps_eq, 0.0)) {
      out.status = VerifyStatus::CounterexampleFound;
      out.kind = ViolationKind::Feasibility;
      out.counterexample = x;
      rep.status = VerifyStatus::CounterexampleFound;
      rep.bound = r.witness_value;
      out.regions.push_back(rep);
      return out;
    }
    r.status = BnbStatus::Unknown;
  }
  if (r.status == BnbStatus::Unknown) rep.status = VerifyStatus::Unknown;
  detail::merge_region(out, rep);
  return out;
}

// ---------------------------------------------------------------------------
// ReLU networks (one hidden layer)

inline VerificationOutcome verify_correctness_relu(const Mlp& net, const RegionSpec& regions,
                                                   const std::vector<ActivationSet>& Q, const BnbConfig& cfg) {
  VerificationOutcome out;
  const int n = regions.dim();
  const bool affine_h = detail::is_affine(regions.h);
  for (const auto& S : Q) {
    const Polytope poly = superlevel_polytope(net, S, regions.X);
    RegionReport rep{S.str(), "correctness", "18", VerifyStatus::Valid, 0.0, 0};
    std::optional<Eigen::VectorXd> ce;
    if (affine_h) {
      const auto [w, c] = detail::affine_coeffs(regions.h, n);
      const LpResult lp = lp_minimize(poly, w);
      rep.boxes = 1;
      if (!lp.feasible()) {
        rep.bound = std::numeric_limits<double>::infinity();
      } else {
        rep.bound = lp.objective + c;
        if (rep.bound < -cfg.delta) {
          // Re-solve on a slightly shrunk polytope so the witness is interior.
          Polytope inner = poly;
          for (int i = 0; i < inner.rows(); ++i) inner.b(i) -= 1e-9 * std::max(1.0, inner.A.row(i).norm());
          const LpResult lp2 = lp_minimize(inner, w);
          if (lp2.feasible()) ce = lp2.x;
          if (!ce) rep.status = VerifyStatus::Unknown;
        }
      }
    } else {
      Box bb = bounding_box(poly);
      if (bb.empty()) {
        rep.bound = std::numeric_limits<double>::infinity();
      } else {
        NlpProblem p;
        p.objective = regions.h;
        p.ineq = detail::polytope_constraints(poly);
        p.box = bb;
        const BnbResult r = branch_and_bound(p, cfg);
        rep.boxes = r.boxes;
        rep.bound = r.bound;
        if (r.status == BnbStatus::Counterexample) ce = detail::to_eigen(r.witness);
        if (r.status == BnbStatus::Unknown) rep.status = VerifyStatus::Unknown;
      }
    }
    if (ce) {
      if (net.forward(*ce) >= 0.0 && regions.h_value(*ce) < -cfg.delta_ce()) {
        rep.status = VerifyStatus::CounterexampleFound;
        rep.bound = regions.h_value(*ce);
        out.regions.push_back(rep);
        out.status = VerifyStatus::CounterexampleFound;
        out.kind = ViolationKind::Correctness;
        out.counterexample = *ce;
        return out;
      }
      rep.status = VerifyStatus::Unknown;
    }
    detail::merge_region(out, rep);
  }
  return out;
}

inline VerificationOutcome verify_feasibility_relu(const Mlp& net, const NeuronBounds& R, const StochasticAffineSystem& sys,
                                                   double k, const InputSet& U, const Box& X,
                                                   const std::vector<ActivationSet>& Q, const BnbConfig& cfg) {
  VerificationOutcome out;
  for (const auto& S : Q) {
    const RegionTerms terms = lambda_xi_relu_region(net, R, sys, k, S);
    const Polytope poly = region_polytope(net, S, X);
    RegionReport rep{S.str(), "feasibility", "", VerifyStatus::Valid, 0.0, 0};
    Box bb = bounding_box(poly);
    if (bb.empty()) {
      rep.level = "22";
      rep.bound = std::numeric_limits<double>::infinity();
      detail::merge_region(out, rep);
      continue;
    }
    NlpProblem base;
    base.ineq = detail::polytope_constraints(poly);
    base.ineq.push_back(terms.tilde_b);
    base.box = bb;

    // Levels in order; the last applicable one is exact and may falsify.
    struct Level {
      const char* name;
      NlpProblem p;
    };
    std::vector<Level> levels;
    if (sys.n_u == 0) {
      levels.push_back({"22", base});
      levels.back().p.objective = terms.xi;
    } else {
      if (U.contains_zero()) {
        levels.push_back({"22", base});
        levels.back().p.objective = terms.xi;
      }
      if (!U.bounded()) {
        levels.push_back({"21", base});
        levels.back().p.objective = terms.xi;
        levels.back().p.eq = terms.lambda;
      } else {
        levels.push_back({"19", base});
        levels.back().p.objective = detail::farkas_box_objective(terms.lambda, terms.xi, *U.box);
      }
    }
    for (std::size_t li = 0; li < levels.size(); ++li) {
      const bool exact = li + 1 == levels.size();
      BnbResult r = branch_and_bound(levels[li].p, cfg);
      rep.level = levels[li].name;
      rep.boxes += r.boxes;
      rep.bound = r.bound;
      if (r.status == BnbStatus::Valid) {
        rep.status = VerifyStatus::Valid;
        break;
      }
      if (!exact) continue;
      if (r.status == BnbStatus::Counterexample) {
        const Eigen::VectorXd x = detail::to_eigen(r.witness);
        std::vector<double> xs = r.witness;
        GeneratorTerms t;
        t.xi = eval_point(terms.xi, xs);
        t.lambda.resize(sys.n_u);
        for (int m = 0; m < sys.n_u; ++m) t.lambda(m) = eval_point(terms.lambda[m], xs);
        if (tilde_b(net, R, x) >= 0.0 && pointwise_infeasible(t, U, cfg.eps_eq, 0.0)) {
          rep.status = VerifyStatus::CounterexampleFound;
          rep.bound = r.witness_value;
          out.regions.push_back(rep);
          out.status = VerifyStatus::CounterexampleFound;
          out.kind = ViolationKind::Feasibility;
          out.counterexample = x;
          return out;
        }
      }
      rep.status = VerifyStatus::Unknown;
    }
    detail::merge_region(out, rep);
  }
  return out;
}

// Correctness first, then feasibility; the first counterexample wins.
inline VerificationOutcome combine(VerificationOutcome a, const VerificationOutcome& b) {
  if (a.status == VerifyStatus::CounterexampleFound) return a;
  VerificationOutcome out = b;
  out.regions.insert(out.regions.begin(), a.regions.begin(), a.regions.end());
  out.certified_bound = std::min(a.certified_bound, b.certified_bound);
  if (b.status == VerifyStatus::CounterexampleFound) return out;
  if (a.status == VerifyStatus::Unknown || b.status == VerifyStatus::Unknown) {
    out.status = VerifyStatus::Unknown;
    out.gap = std::max(a.gap, b.gap);
  }
  return out;
}

struct ReluArtifacts {
  std::vector<ActivationSet> Q;
  NeuronBounds R;
  bool empty_superlevel = false;
};

// Enumeration and neuron bounds for a ReLU net; an empty super-level set
// yields an empty Q.
inline ReluArtifacts relu_artifacts(const Mlp& net, const RegionSpec& regions, std::uint64_t seed) {
  ReluArtifacts a;
  const auto x0 = find_superlevel_point(net, regions.X_I, regions.X, seed);
  if (!x0) {
    a.empty_superlevel = true;
    a.R.R = Eigen::VectorXd::Constant(net.hidden_width(), 1e-6);
    return a;
  }
  a.Q = enumerate_activation_sets(net, *x0, regions.X).sets;
  a.R = compute_neuron_bounds(net, regions.X, a.Q);
  return a;
}

inline VerificationOutcome verify_smooth(const Mlp& net, const StochasticAffineSystem& sys, const RegionSpec& regions,
                                         double k, const InputSet& U, const BnbConfig& cfg) {
  VerificationOutcome c = verify_correctness_smooth(net, regions, cfg);
  if (c.status == VerifyStatus::CounterexampleFound) return c;
  return combine(std::move(c), verify_feasibility_smooth(net, sys, k, U, regions.X, cfg));
}

inline VerificationOutcome verify_relu(const Mlp& net, const StochasticAffineSystem& sys, const RegionSpec& regions,
                                       double k, const InputSet& U, const ReluArtifacts& art, const BnbConfig& cfg) {
  VerificationOutcome c = verify_correctness_relu(net, regions, art.Q, cfg);
  if (c.status == VerifyStatus::CounterexampleFound) return c;
  return combine(std::move(c), verify_feasibility_relu(net, art.R, sys, k, U, regions.X, art.Q, cfg));
}

// Dispatch on the network's activation.
inline VerificationOutcome verify(const Mlp& net, const StochasticAffineSystem& sys, const RegionSpec& regions, double k,
                                  const InputSet& U, const BnbConfig& cfg, std::uint64_t seed = 1) {
  if (net.smooth()) return verify_smooth(net, sys, regions, k, U, cfg);
  net.require_single_hidden("relu verification");
  return verify_relu(net, sys, regions, k, U, relu_artifacts(net, regions, seed), cfg);
}

}  // namespace sncbf
