#pragma once

// The SNCBF-QP safety filter  min |u - u_ref|^2  s.t.  lambda . u + xi >= margin,
// u in U, and its relaxed variant with a penalized slack.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "sncbf/generator.hpp"
#include "sncbf/system.hpp"

namespace sncbf {

struct QpResult {
  Eigen::VectorXd u;
  bool infeasible = false;
};

namespace detail {

inline Eigen::VectorXd clamp_to(const Eigen::VectorXd& u, const Box& b) {
  Eigen::VectorXd out = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) out(i) = std::clamp(u(i), b[i].lo, b[i].hi);
  return out;
}

// u(mu) = clamp(u_ref + mu * lambda); lambda . u(mu) is nondecreasing in mu.
// Smallest mu >= 0 reaching lambda . u >= s, assuming it is reachable.
inline Eigen::VectorXd box_projection_path(const Eigen::VectorXd& lambda, const Eigen::VectorXd& u_ref, const Box& b,
                                           double s) {
  auto at = [&](double mu) { return clamp_to(u_ref + mu * lambda, b); };
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (lambda.dot(at(hi)) < s && guard++ < 2000) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (lambda.dot(at(mid)) >= s)
      hi = mid;
    else
      lo = mid;
  }
  Eigen::VectorXd best = at(hi);
  // Exact solve on the active set found at hi.
  double clamped = 0.0, free_norm = 0.0, free_ref = 0.0;
  const Eigen::VectorXd raw = u_ref + hi * lambda;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (raw(i) <= b[i].lo || raw(i) >= b[i].hi) {
      clamped += lambda(i) * best(i);
    } else {
      free_norm += lambda(i) * lambda(i);
      free_ref += lambda(i) * u_ref(i);
    }
  }
  if (free_norm > 0.0) {
    const double mu = (s - clamped - free_ref) / free_norm;
    if (mu >= 0.0 && mu <= hi) {
      const Eigen::VectorXd cand = at(mu);
      if (lambda.dot(cand) >= s) best = cand;
    }
  }
  return best;
}

inline Eigen::VectorXd box_maximizer(const Eigen::VectorXd& lambda, const Eigen::VectorXd& u_ref, const Box& b) {
  Eigen::VectorXd u(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    u(i) = lambda(i) > 0.0 ? b[i].hi : lambda(i) < 0.0 ? b[i].lo : std::clamp(u_ref(i), b[i].lo, b[i].hi);
  return u;
}

}  // namespace detail

inline QpResult sncbf_qp_control(const GeneratorTerms& t, const Eigen::VectorXd& u_ref, const InputSet& U,
                                 double margin = 0.0) {
  QpResult r;
  const double s = margin - t.xi;  // need lambda . u >= s
  if (t.lambda.size() == 0) {
    r.u = u_ref;
    r.infeasible = s > 0.0;
    return r;
  }
  if (!U.bounded()) {
    const double gap = s - t.lambda.dot(u_ref);
    const double nn = t.lambda.squaredNorm();
    if (gap <= 0.0) {
      r.u = u_ref;
    } else if (nn == 0.0) {
      r.u = u_ref;
      r.infeasible = true;
    } else {
      r.u = u_ref + (gap / nn) * t.lambda;
      // Rounding can leave the constraint a few ulps short.
      for (int it = 0; it < 4 && t.lambda.dot(r.u) < s; ++it) r.u += (s - t.lambda.dot(r.u)) / nn * t.lambda;
    }
    return r;
  }
  const Box& b = *U.box;
  const Eigen::VectorXd proj = detail::clamp_to(u_ref, b);
  if (t.lambda.dot(proj) >= s) {
    r.u = proj;
    return r;
  }
  const Eigen::VectorXd top = detail::box_maximizer(t.lambda, u_ref, b);
  if (t.lambda.dot(top) < s) {
    r.u = top;
    r.infeasible = true;
    return r;
  }
  r.u = detail::box_projection_path(t.lambda, u_ref, b, s);
  return r;
}

// min |u - u_ref|^2 + penalty * r  s.t.  lambda . u + xi + r >= margin, r >= 0,
// u in U. nu in [0, penalty] is the multiplier of the relaxed constraint, so
// the objective's sensitivity to (lambda . u + xi) is -nu.
struct RelaxedQp {
  Eigen::VectorXd u;
  double r = 0.0;
  double nu = 0.0;
  double objective = 0.0;
};

inline RelaxedQp relaxed_qp(const GeneratorTerms& t, const Eigen::VectorXd& u_ref, const InputSet& U, double penalty,
                            double margin = 0.0) {
  RelaxedQp q;
  const Eigen::Index m = t.lambda.size();
  auto clampU = [&](const Eigen::VectorXd& u) { return U.bounded() ? detail::clamp_to(u, *U.box) : u; };
  auto constraint = [&](const Eigen::VectorXd& u) { return (m ? t.lambda.dot(u) : 0.0) + t.xi - margin; };
  auto finish = [&](Eigen::VectorXd u, double nu) {
    q.u = std::move(u);
    q.nu = nu;
    q.r = std::max(0.0, -constraint(q.u));
    q.objective = (q.u - u_ref).squaredNorm() + penalty * q.r;
    return q;
  };
  const Eigen::VectorXd u0 = clampU(u_ref);
  if (constraint(u0) >= 0.0) return finish(u0, 0.0);
  if (m == 0 || t.lambda.isZero(0.0)) return finish(u0, penalty);
  // u(nu) = clamp(u_ref + nu lambda / 2); c(nu) is nondecreasing.
  auto at = [&](double nu) { return clampU(u_ref + 0.5 * nu * t.lambda); };
  if (constraint(at(penalty)) <= 0.0) return finish(at(penalty), penalty);
  double lo = 0.0, hi = penalty;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (constraint(at(mid)) >= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  if (!U.bounded()) {
    // Exact: lambda . (u_ref + nu lambda / 2) + xi - margin = 0.
    const double nu = 2.0 * (margin - t.xi - t.lambda.dot(u_ref)) / t.lambda.squaredNorm();
    Eigen::VectorXd u = at(nu);
    for (int it = 0; it < 4 && constraint(u) < 0.0; ++it) u += (-constraint(u)) / t.lambda.squaredNorm() * t.lambda;
    return finish(std::move(u), nu);
  }
  return finish(at(hi), hi);
}

}  // namespace sncbf
