#pragma once

// Infinitesimal-generator terms. The control constraint is always written
// lambda . u + xi >= 0 with the class-K term k*B folded into xi.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "sncbf/enumerate.hpp"
#include "sncbf/expr.hpp"
#include "sncbf/net_expr.hpp"
#include "sncbf/nn.hpp"
#include "sncbf/system.hpp"

namespace sncbf {

struct GeneratorTerms {
  Eigen::VectorXd lambda;
  double xi = 0.0;

  double value(const Eigen::VectorXd& u) const { return (lambda.size() ? lambda.dot(u) : 0.0) + xi; }
};

struct NeuronBounds {
  Eigen::VectorXd R;
};

// Quantities of a smooth net at one state.
struct SmoothPoint {
  double B;
  Eigen::VectorXd grad;
  double half_trace;  // 1/2 tr(V^T H V)
};

inline SmoothPoint smooth_point(const Mlp& net, const StochasticAffineSystem& sys, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd H = net.hessian(x);
  return {net.forward(x), net.jacobian(x), 0.5 * (sys.V.transpose() * H * sys.V).trace()};
}

inline double smooth_generator(const Mlp& net, const StochasticAffineSystem& sys, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) {
  const SmoothPoint p = smooth_point(net, sys, x);
  return p.grad.dot(sys.velocity(x, u)) + p.half_trace;
}

inline GeneratorTerms lambda_xi_smooth(const Mlp& net, const StochasticAffineSystem& sys, double k,
                                       const Eigen::VectorXd& x) {
  const SmoothPoint p = smooth_point(net, sys, x);
  GeneratorTerms t;
  t.lambda = sys.n_u > 0 ? Eigen::VectorXd(sys.input_matrix(x).transpose() * p.grad) : Eigen::VectorXd(0);
  t.xi = p.grad.dot(sys.drift(x)) + p.half_trace + k * p.B;
  return t;
}

// ---------------------------------------------------------------------------
// ReLU lower bound B̃ = B - 1/2 sum W2j |z_j| - 1/2 sum (|W2j|/R_j) z_j^2.

inline Eigen::VectorXd curvature_weights(const Mlp& net, const NeuronBounds& R) {
  const Eigen::VectorXd W2 = net.W2();
  if (R.R.size() != W2.size()) throw Error("neuron bound count mismatch");
  return W2.cwiseAbs().cwiseQuotient(R.R);
}

inline double tilde_b(const Mlp& net, const NeuronBounds& R, const Eigen::VectorXd& x) {
  net.require_single_hidden("tilde_b");
  const Eigen::VectorXd z = net.preactivation(x);
  const Eigen::VectorXd W2 = net.W2();
  const Eigen::VectorXd c = curvature_weights(net, R);
  double v = net.forward(x);
  for (Eigen::Index j = 0; j < z.size(); ++j) v -= 0.5 * W2(j) * std::fabs(z(j)) + 0.5 * c(j) * z(j) * z(j);
  return v;
}

// Gradient part sum_j (W2j z̃_j - c_j z_j) W1j of the generator, with
// z̃ = 1(z>0) - sgn(z)/2 (zero at ties).
inline Eigen::VectorXd relu_drift_weights(const Mlp& net, const NeuronBounds& R, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = net.preactivation(x);
  const Eigen::VectorXd W2 = net.W2();
  const Eigen::VectorXd c = curvature_weights(net, R);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double zt = z(j) == 0.0 ? 0.0 : 0.5;
    w += (W2(j) * zt - c(j) * z(j)) * net.W1().row(j).transpose();
  }
  return w;
}

// -1/2 sum c_j W1j^T V V^T W1j.
inline double relu_diffusion_term(const Mlp& net, const NeuronBounds& R, const Eigen::MatrixXd& V) {
  const Eigen::VectorXd c = curvature_weights(net, R);
  double s = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    const Eigen::VectorXd v = V.transpose() * net.W1().row(j).transpose();
    s -= 0.5 * c(j) * v.squaredNorm();
  }
  return s;
}

inline double relu_generator(const Mlp& net, const NeuronBounds& R, const StochasticAffineSystem& sys,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  net.require_single_hidden("relu_generator");
  return relu_drift_weights(net, R, x).dot(sys.velocity(x, u)) + relu_diffusion_term(net, R, sys.V);
}

inline GeneratorTerms lambda_xi_relu(const Mlp& net, const NeuronBounds& R, const StochasticAffineSystem& sys,
                                     double k, const Eigen::VectorXd& x) {
  net.require_single_hidden("lambda_xi_relu");
  const Eigen::VectorXd w = relu_drift_weights(net, R, x);
  GeneratorTerms t;
  t.lambda = sys.n_u > 0 ? Eigen::VectorXd(sys.input_matrix(x).transpose() * w) : Eigen::VectorXd(0);
  t.xi = w.dot(sys.drift(x)) + relu_diffusion_term(net, R, sys.V) + k * tilde_b(net, R, x);
  return t;
}

// A barrier as used pointwise by training and simulation: B for smooth nets,
// B̃ with fixed neuron bounds for ReLU nets.
struct BarrierView {
  const Mlp& net;
  const NeuronBounds* R = nullptr;  // set for ReLU nets

  bool relu() const { return R != nullptr; }
  double lower(const Eigen::VectorXd& x) const { return relu() ? tilde_b(net, *R, x) : net.forward(x); }
  GeneratorTerms terms(const StochasticAffineSystem& sys, double k, const Eigen::VectorXd& x) const {
    return relu() ? lambda_xi_relu(net, *R, sys, k, x) : lambda_xi_smooth(net, sys, k, x);
  }
  bool analytic() const { return net.num_layers() == 2; }
};

struct RegionTerms {
  std::vector<Expr> lambda;  // n_u
  Expr xi;
  Expr tilde_b;
};

// Symbolic λ^S, ξ^S and B̃ on the interior of region S. Off ties z̃ = 1/2 for
// every neuron, so B̃ is the single quadratic 1/2 W2.z + r2 - 1/2 sum c_j z_j^2.
inline RegionTerms lambda_xi_relu_region(const Mlp& net, const NeuronBounds& R, const StochasticAffineSystem& sys,
                                         double k, const ActivationSet& S) {
  net.require_single_hidden("lambda_xi_relu_region");
  if (S.layers.size() != 1 || static_cast<int>(S.layers[0].size()) != net.hidden_width())
    throw Error("activation set does not match the network");
  const int n = net.input_dim();
  const std::vector<Expr> x = state_vars(n);
  const Eigen::VectorXd W2 = net.W2();
  const Eigen::VectorXd c = curvature_weights(net, R);
  // Linear drift weights w(x) = sum_j (W2j/2 - c_j z_j) W1j, collected per coordinate.
  Eigen::VectorXd w0 = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(n, n);  // w(x) = w0 + w1 x
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(n);    // linear part of B̃
  Eigen::MatrixXd quad = Eigen::MatrixXd::Zero(n, n);
  double cst = net.r2();
  for (Eigen::Index j = 0; j < W2.size(); ++j) {
    const Eigen::VectorXd a = net.W1().row(j).transpose();
    const double r = net.r1()(j);
    w0 += (0.5 * W2(j) - c(j) * r) * a;
    w1 -= c(j) * a * a.transpose();
    lin += (0.5 * W2(j) - c(j) * r) * a;
    quad -= 0.5 * c(j) * a * a.transpose();
    cst += 0.5 * W2(j) * r - 0.5 * c(j) * r * r;
  }
  std::vector<Expr> w(n);
  for (int i = 0; i < n; ++i) w[i] = detail::affine_expr(w1.row(i), w0(i), x);
  Expr bt = detail::affine_expr(lin.transpose(), cst, x);
  for (int p = 0; p < n; ++p) {
    if (quad(p, p) != 0.0) bt = bt + quad(p, p) * pow(x[p], 2);
    for (int q = p + 1; q < n; ++q)
      if (quad(p, q) != 0.0) bt = bt + (2.0 * quad(p, q)) * (x[p] * x[q]);
  }
  RegionTerms out;
  out.tilde_b = bt;
  for (int m = 0; m < sys.n_u; ++m) {
    Expr l = Expr::constant(0.0);
    for (int i = 0; i < n; ++i) l = l + w[i] * sys.g[i][m];
    out.lambda.push_back(l);
  }
  Expr xi = Expr::constant(relu_diffusion_term(net, R, sys.V));
  for (int i = 0; i < n; ++i) xi = xi + w[i] * sys.f[i];
  out.xi = xi + k * bt;
  return out;
}

// R_j = 1.01 * max over regions of LP-max |z_j| on the region's super-level
// polytope, floored at 1e-6.
inline NeuronBounds compute_neuron_bounds(const Mlp& net, const Box& X, const std::vector<ActivationSet>& Q) {
  net.require_single_hidden("compute_neuron_bounds");
  const int M = net.hidden_width();
  NeuronBounds nb{Eigen::VectorXd::Zero(M)};
  for (const auto& S : Q) {
    const Polytope p = superlevel_polytope(net, S, X);
    for (int j = 0; j < M; ++j) {
      const Eigen::VectorXd a = net.W1().row(j).transpose();
      const double r = net.r1()(j);
      const LpResult hi = lp_maximize(p, a);
      if (hi.status == LpStatus::Unbounded) throw Error("neuron bound LP unbounded");
      if (!hi.feasible()) continue;
      const LpResult lo = lp_minimize(p, a);
      nb.R(j) = std::max({nb.R(j), std::fabs(hi.objective + r), std::fabs(lo.objective + r)});
    }
  }
  for (int j = 0; j < M; ++j) nb.R(j) = std::max(1.01 * nb.R(j), 1e-6);
  return nb;
}

}  // namespace sncbf
