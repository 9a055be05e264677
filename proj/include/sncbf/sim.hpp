#pragma once

// Euler-Maruyama simulation under the SNCBF-QP filter, Monte Carlo survival
// estimates, worst-case probability bounds and the safe-region coverage.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "sncbf/bnb.hpp"
#include "sncbf/enumerate.hpp"
#include "sncbf/error.hpp"
#include "sncbf/generator.hpp"
#include "sncbf/qp.hpp"
#include "sncbf/system.hpp"
#include "sncbf/verify.hpp"

namespace sncbf {

struct SimConfig {
  double dt = 1e-3;
  double horizon = 1.0;
  int trials = 1000;
  std::uint64_t seed = 1;
  std::optional<Eigen::VectorXd> x0;  // unset: each trial draws x0 uniformly from X_I
  Eigen::VectorXd u_ref;              // constant reference input; empty means zero
  int threads = 1;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("sim.dt must be positive");
    if (!(horizon >= dt)) throw ConfigError("sim.horizon must be at least sim.dt");
    if (trials < 1) throw ConfigError("sim.trials must be at least 1");
    if (threads < 1) throw ConfigError("threads must be at least 1");
  }
  int steps() const { return static_cast<int>(std::llround(horizon / dt)); }
};

struct Trace {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> controls;
  std::vector<double> B;
  std::vector<double> B_tilde;  // ReLU nets only
  bool exited = false;
  double exit_time = std::numeric_limits<double>::quiet_NaN();
  bool infeasible = false;  // some QP step had no admissible input
  bool aborted = false;
  std::string diagnostic;
};

inline std::mt19937_64 trial_rng(std::uint64_t seed, std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

inline Eigen::VectorXd sample_box(const Box& b, std::mt19937_64& rng) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < b.size(); ++i) {
    std::uniform_real_distribution<double> u(b[i].lo, b[i].hi);
    x(static_cast<Eigen::Index>(i)) = b[i].lo == b[i].hi ? b[i].lo : u(rng);
  }
  return x;
}

inline bool inside(const Box& b, const Eigen::VectorXd& x) {
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!(x(static_cast<Eigen::Index>(i)) >= b[i].lo && x(static_cast<Eigen::Index>(i)) <= b[i].hi)) return false;
  return true;
}

// One Euler-Maruyama path from x0. The trace stops at the first sample with
// B < 0 or outside X; with record = false only the flags are kept.
inline Trace simulate(const BarrierView& b, const StochasticAffineSystem& sys, const RegionSpec& regions,
                      const InputSet& U, double k, const SimConfig& cfg, const Eigen::VectorXd& x0,
                      std::mt19937_64& rng, bool record = true) {
  cfg.validate();
  Trace tr;
  const Eigen::VectorXd u_ref = cfg.u_ref.size() ? cfg.u_ref : Eigen::VectorXd::Zero(sys.n_u);
  if (u_ref.size() != sys.n_u) throw ConfigError("sim.u_ref must have input_dim entries");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sq = std::sqrt(cfg.dt);
  Eigen::VectorXd x = x0;
  Eigen::VectorXd noise(sys.n_v);
  const int steps = cfg.steps();
  for (int s = 0;; ++s) {
    const double t = s * cfg.dt;
    if (!x.allFinite()) {
      tr.aborted = true;
      tr.diagnostic = "state became non-finite at t=" + std::to_string(t);
      break;
    }
    const double Bx = b.net.forward(x);
    Eigen::VectorXd u = u_ref;
    const bool leaving = Bx < 0.0 || !inside(regions.X, x);
    if (!leaving && s < steps && sys.n_u > 0) {
      const QpResult q = sncbf_qp_control(b.terms(sys, k, x), u_ref, U);
      u = q.u;
      tr.infeasible = tr.infeasible || q.infeasible;
    }
    if (record) {
      tr.times.push_back(t);
      tr.states.push_back(x);
      tr.controls.push_back(u);
      tr.B.push_back(Bx);
      if (b.relu()) tr.B_tilde.push_back(b.lower(x));
    }
    if (leaving) {
      tr.exited = true;
      tr.exit_time = t;
      break;
    }
    if (s >= steps) break;
    for (int i = 0; i < sys.n_v; ++i) noise(i) = gauss(rng);
    x = x + sys.velocity(x, u) * cfg.dt + sys.V * (sq * noise);
  }
  return tr;
}

struct ProportionInterval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval at the given normal quantile (95% by default).
inline ProportionInterval wilson_interval(long successes, long n, double z = 1.959963984540054) {
  if (n <= 0) return {};
  const double N = static_cast<double>(n), p = static_cast<double>(successes) / N;
  const double den = 1.0 + z * z / N;
  const double center = (p + z * z / (2.0 * N)) / den;
  const double half = z * std::sqrt(p * (1.0 - p) / N + z * z / (4.0 * N * N)) / den;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct SafetyEstimate {
  double p_hat = 0.0;
  ProportionInterval wilson;
  long trials = 0;
  long survived = 0;
  long infeasible_trials = 0;
  long aborted_trials = 0;
};

// Fraction of trials whose sampled path never leaves {B >= 0} within X.
inline SafetyEstimate estimate_safety_probability(const BarrierView& b, const StochasticAffineSystem& sys,
                                                  const RegionSpec& regions, const InputSet& U, double k,
                                                  const SimConfig& cfg) {
  cfg.validate();
  if (cfg.trials < 100) throw ConfigError("sim.trials must be at least 100 for a probability estimate");
  const int n = cfg.trials;
  std::vector<char> ok(n, 0), infeasible(n, 0), aborted(n, 0);
  auto run = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      std::mt19937_64 rng = trial_rng(cfg.seed, static_cast<std::uint64_t>(i));
      const Eigen::VectorXd x0 = cfg.x0 ? *cfg.x0 : sample_box(regions.X_I, rng);
      const Trace tr = simulate(b, sys, regions, U, k, cfg, x0, rng, false);
      ok[i] = !tr.exited && !tr.aborted;
      infeasible[i] = tr.infeasible;
      aborted[i] = tr.aborted;
    }
  };
  const int workers = std::min(cfg.threads, n);
  if (workers <= 1) {
    run(0, n);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, n * w / workers, n * (w + 1) / workers);
    for (auto& th : pool) th.join();
  }
  SafetyEstimate e;
  e.trials = n;
  for (int i = 0; i < n; ++i) {
    e.survived += ok[i];
    e.infeasible_trials += infeasible[i];
    e.aborted_trials += aborted[i];
  }
  e.p_hat = static_cast<double>(e.survived) / n;
  e.wilson = wilson_interval(e.survived, n);
  return e;
}

struct SafetyBound {
  double bound = 0.0;  // (b0 / c) exp(-c T)
  double b0 = 0.0;
  double c = 0.0;
  bool estimated = false;  // c from samples rather than a certified maximum

  double confidence() const { return 1.0 - bound; }
  double clipped() const { return std::max(bound, 0.0); }
};

inline SafetyBound safety_bound(double b0, double c, double T) {
  if (!(c > 0.0)) throw Error("worst-case bound needs a positive supremum");
  return {b0 / c * std::exp(-c * T), b0, c, false};
}

// Smooth nets: c is the largest B over uniform samples of X that land in D,
// inflated by 5%.
inline SafetyBound worst_case_bound_smooth(const Mlp& net, const Box& X, const Eigen::VectorXd& x0, double T,
                                           std::uint64_t seed = 1, long samples = 1000000) {
  const double b0 = net.forward(x0);
  if (!(b0 > 0.0) || !inside(X, x0)) throw Error("initial state must lie in the interior of the super-level set");
  std::mt19937_64 rng(seed);
  double best = b0;
  for (long i = 0; i < samples; ++i) best = std::max(best, net.forward(sample_box(X, rng)));
  SafetyBound sb = safety_bound(b0, 1.05 * best, T);
  sb.estimated = true;
  return sb;
}

// ReLU nets: c bounds the maximum of B̃ over each region's super-level
// polytope from above with branch and bound; b0 = B̃(x0).
// Supremum of B̃ over the regions Q restricted to B >= 0; -inf when Q is empty.
inline double max_tilde_b(const Mlp& net, const NeuronBounds& R, const Box& X, const std::vector<ActivationSet>& Q,
                          const BnbConfig& cfg = {}, double gap_tol = 1e-6) {
  net.require_single_hidden("max_tilde_b");
  const StochasticAffineSystem none = StochasticAffineSystem::build(
      net.input_dim(), 0, std::vector<std::string>(net.input_dim(), "0"), {},
      Eigen::MatrixXd::Zero(net.input_dim(), 1));
  double c = -std::numeric_limits<double>::infinity();
  for (const auto& S : Q) {
    const Polytope p = superlevel_polytope(net, S, X);
    NlpProblem prob;
    prob.objective = -lambda_xi_relu_region(net, R, none, 0.0, S).tilde_b;
    prob.ineq = detail::polytope_constraints(p);
    prob.box = X;
    const BnbResult r = BranchAndBound(prob, cfg).minimize(gap_tol);
    if (std::isfinite(r.bound)) c = std::max(c, -r.bound);
  }
  return c;
}

inline SafetyBound worst_case_bound_relu(const Mlp& net, const NeuronBounds& R, const Box& X,
                                         const std::vector<ActivationSet>& Q, const Eigen::VectorXd& x0, double T,
                                         const BnbConfig& cfg = {}, double gap_tol = 1e-6) {
  net.require_single_hidden("worst_case_bound_relu");
  const double b0 = tilde_b(net, R, x0);
  if (!(b0 > 0.0) || !inside(X, x0) || net.forward(x0) < 0.0)
    throw Error("initial state must lie in the interior of the B̃ super-level set");
  return safety_bound(b0, std::max(b0, max_tilde_b(net, R, X, Q, cfg, gap_tol)), T);
}

// Share of grid points of X inside the safe set where B >= 0.
inline double coverage_metric(const Mlp& net, const RegionSpec& regions, int grid_n) {
  if (grid_n < 50) throw ConfigError("coverage grid needs at least 50 points per dimension");
  const int n = static_cast<int>(regions.X.size());
  long total = 0, covered = 0;
  std::vector<int> idx(n, 0);
  Eigen::VectorXd x(n);
  for (;;) {
    for (int i = 0; i < n; ++i)
      x(i) = regions.X[i].lo + (regions.X[i].hi - regions.X[i].lo) * idx[i] / (grid_n - 1);
    if (!in_unsafe(regions, x)) {
      ++total;
      covered += net.forward(x) >= 0.0;
    }
    int d = 0;
    while (d < n && ++idx[d] == grid_n) idx[d++] = 0;
    if (d == n) break;
  }
  return total ? static_cast<double>(covered) / static_cast<double>(total) : 0.0;
}

struct RateEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// (E[F(x_t)] - F(x)) / t over one Euler-Maruyama step of length t.
inline RateEstimate one_step_rate(const std::function<double(const Eigen::VectorXd&)>& F,
                                  const StochasticAffineSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                  double t, long draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::VectorXd mean_step = x + sys.velocity(x, u) * t;
  const double F0 = F(x), sq = std::sqrt(t);
  double s = 0.0, s2 = 0.0;
  Eigen::VectorXd noise(sys.n_v);
  for (long i = 0; i < draws; ++i) {
    for (int j = 0; j < sys.n_v; ++j) noise(j) = gauss(rng);
    const double v = (F(mean_step + sys.V * (sq * noise)) - F0) / t;
    s += v;
    s2 += v * v;
  }
  const double N = static_cast<double>(draws);
  const double m = s / N;
  return {m, std::sqrt(std::max(0.0, s2 / N - m * m) / N)};
}

}  // namespace sncbf
