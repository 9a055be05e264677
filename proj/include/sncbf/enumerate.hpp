#pragma once

// Activation-region enumeration of a ReLU network's super-level set
// {B >= 0}: region polytopes, the super-level and unstable-neuron LPs, and
// breadth-first search over neighboring patterns.

#include <Eigen/Dense>
#include <deque>
#include <optional>
#include <random>
#include <unordered_set>
#include <vector>

#include "sncbf/lp.hpp"
#include "sncbf/nn.hpp"

namespace sncbf {

struct NeuronId {
  int layer = 0;
  int index = 0;
};

// Rows z_j >= 0 for active neurons and z_j <= 0 for inactive ones, in X.
inline Polytope region_polytope(const Mlp& net, const ActivationSet& S, const Box& X) {
  Polytope p(X);
  const auto pre = net.region_preactivations(S);
  for (std::size_t l = 0; l < pre.size(); ++l) {
    const auto& [P, q] = pre[l];
    for (Eigen::Index j = 0; j < P.rows(); ++j) {
      if (S.layers[l][j])
        p.add_row(-P.row(j).transpose(), q(j), true);
      else
        p.add_row(P.row(j).transpose(), -q(j));
    }
  }
  return p;
}

// Region polytope intersected with {W̄(S)^T x + r̄(S) >= 0}.
inline Polytope superlevel_polytope(const Mlp& net, const ActivationSet& S, const Box& X) {
  Polytope p = region_polytope(net, S, X);
  const RegionLinearForm lf = net.region_linear_form(S);
  p.add_row(-lf.w, lf.r);
  return p;
}

inline LpResult super_lp(const Mlp& net, const ActivationSet& S, const Box& X) {
  return solve_lp(superlevel_polytope(net, S, X));
}

inline LpResult uslp(const Mlp& net, const ActivationSet& S, NeuronId j, const Box& X) {
  const auto pre = net.region_preactivations(S);
  const auto& [P, q] = pre[j.layer];
  LinearEqualities eq{P.row(j.index), Eigen::VectorXd::Constant(1, -q(j.index))};
  return solve_lp(superlevel_polytope(net, S, X), &eq);
}

inline constexpr std::size_t kEnumerationCap = std::size_t{1} << 20;

// Rejection-samples X_I (then X) for a point with B >= 0.
inline std::optional<Eigen::VectorXd> find_superlevel_point(const Mlp& net, const Box& X_I, const Box& X,
                                                            std::uint64_t seed, int draws = 100000) {
  std::mt19937_64 rng(seed);
  for (const Box* b : {&X_I, &X}) {
    Eigen::VectorXd x(b->size());
    for (int s = 0; s < draws; ++s) {
      for (std::size_t i = 0; i < b->size(); ++i)
        x(i) = std::uniform_real_distribution<double>((*b)[i].lo, (*b)[i].hi)(rng);
      if (net.forward(x) >= 0.0) return x;
    }
  }
  return std::nullopt;
}

struct EnumerationResult {
  std::vector<ActivationSet> sets;  // discovery order
  std::size_t lp_calls = 0;
};

inline EnumerationResult enumerate_activation_sets(const Mlp& net, const Eigen::VectorXd& x0, const Box& X) {
  if (net.activation() != Activation::Relu) throw Error("enumeration requires a relu network");
  if (net.forward(x0) < 0.0) throw Error("seed point is outside the super-level set");
  EnumerationResult out;
  std::deque<ActivationSet> queue;
  std::unordered_set<std::string> seen;
  const ActivationSet start = net.activation_set(x0);
  queue.push_back(start);
  seen.insert(start.str());
  while (!queue.empty()) {
    ActivationSet S = std::move(queue.front());
    queue.pop_front();
    ++out.lp_calls;
    if (!super_lp(net, S, X).feasible()) continue;
    out.sets.push_back(S);
    for (int l = 0; l < net.hidden_layers(); ++l) {
      for (int j = 0; j < net.sizes()[l + 1]; ++j) {
        ActivationSet nb = S;
        nb.layers[l][j] = !nb.layers[l][j];
        const std::string key = nb.str();
        if (seen.count(key)) continue;
        ++out.lp_calls;
        if (!uslp(net, S, {l, j}, X).feasible()) continue;
        if (seen.size() >= kEnumerationCap) throw Error("enumeration blow-up");
        seen.insert(key);
        queue.push_back(std::move(nb));
      }
    }
  }
  return out;
}

}  // namespace sncbf
