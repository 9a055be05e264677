#pragma once

// Smooth networks written as expressions in the state: output, gradient and
// the diffusion-weighted half Hessian trace 1/2 tr(V^T H V).

#include <Eigen/Dense>
#include <vector>

#include "sncbf/expr.hpp"
#include "sncbf/nn.hpp"

namespace sncbf {

struct NetExprs {
  Expr B;
  std::vector<Expr> grad;
  Expr half_trace;
};

namespace detail {

inline Expr affine_expr(const Eigen::RowVectorXd& w, double b, const std::vector<Expr>& in) {
  Expr acc = Expr::constant(b);
  for (Eigen::Index i = 0; i < w.size(); ++i) acc = acc + w(i) * in[i];
  return acc;
}

inline Expr d1_expr(Activation a, const Expr& z) {
  return a == Activation::Softplus ? sigmoid(z) : dtanh(z);
}
inline Expr d2_expr(Activation a, const Expr& z) {
  return a == Activation::Softplus ? dsigmoid(z) : d2tanh(z);
}

}  // namespace detail

inline std::vector<Expr> state_vars(int n) {
  std::vector<Expr> x;
  for (int i = 0; i < n; ++i) x.push_back(Expr::variable(i));
  return x;
}

// Output expression for any activation.
inline Expr output_expr(const Mlp& net) {
  std::vector<Expr> a = state_vars(net.input_dim());
  for (int l = 0; l < net.num_layers(); ++l) {
    std::vector<Expr> z;
    for (Eigen::Index k = 0; k < net.weight(l).rows(); ++k)
      z.push_back(detail::affine_expr(net.weight(l).row(k), net.bias(l)(k), a));
    if (l + 1 == net.num_layers()) return z[0];
    a.clear();
    for (const auto& zk : z) a.push_back(activation_expr(net.activation(), zk));
  }
  return {};
}

inline NetExprs smooth_net_exprs(const Mlp& net, const Eigen::MatrixXd& V) {
  if (!net.smooth()) throw Error("smooth expressions need a smooth activation");
  const int n = net.input_dim();
  const Activation act = net.activation();
  const std::vector<Expr> x = state_vars(n);
  NetExprs out;
  if (net.num_layers() == 2) {
    // Closed form for one hidden layer; each neuron contributes once to each
    // term, which keeps interval enclosures tight.
    const Eigen::MatrixXd& W1 = net.W1();
    const Eigen::VectorXd W2 = net.W2();
    const Eigen::MatrixXd VVt = V * V.transpose();
    out.B = Expr::constant(net.r2());
    out.grad.assign(n, Expr::constant(0.0));
    out.half_trace = Expr::constant(0.0);
    for (Eigen::Index j = 0; j < W1.rows(); ++j) {
      if (W2(j) == 0.0) continue;
      const Expr z = detail::affine_expr(W1.row(j), net.r1()(j), x);
      out.B = out.B + W2(j) * activation_expr(act, z);
      const Expr d1 = detail::d1_expr(act, z);
      for (int i = 0; i < n; ++i) out.grad[i] = out.grad[i] + (W2(j) * W1(j, i)) * d1;
      const double q = W1.row(j) * VVt * W1.row(j).transpose();
      out.half_trace = out.half_trace + (0.5 * W2(j) * q) * detail::d2_expr(act, z);
    }
    return out;
  }
  // Forward second-order propagation over expressions.
  std::vector<Expr> a = x;
  std::vector<std::vector<Expr>> J(n, std::vector<Expr>(n, Expr::constant(0.0)));
  for (int i = 0; i < n; ++i) J[i][i] = Expr::constant(1.0);
  std::vector<std::vector<std::vector<Expr>>> H(n, std::vector<std::vector<Expr>>(n, std::vector<Expr>(n, Expr::constant(0.0))));
  for (int l = 0; l < net.num_layers(); ++l) {
    const Eigen::MatrixXd& W = net.weight(l);
    const Eigen::Index m = W.rows();
    std::vector<Expr> z(m);
    std::vector<std::vector<Expr>> Jz(m, std::vector<Expr>(n, Expr::constant(0.0)));
    std::vector<std::vector<std::vector<Expr>>> Hz(m, std::vector<std::vector<Expr>>(n, std::vector<Expr>(n, Expr::constant(0.0))));
    for (Eigen::Index k = 0; k < m; ++k) {
      z[k] = detail::affine_expr(W.row(k), net.bias(l)(k), a);
      for (Eigen::Index i = 0; i < W.cols(); ++i) {
        if (W(k, i) == 0.0) continue;
        for (int p = 0; p < n; ++p) {
          Jz[k][p] = Jz[k][p] + W(k, i) * J[i][p];
          for (int q = p; q < n; ++q) Hz[k][p][q] = Hz[k][p][q] + W(k, i) * H[i][p][q];
        }
      }
    }
    if (l + 1 == net.num_layers()) {
      out.B = z[0];
      out.grad = Jz[0];
      Expr tr = Expr::constant(0.0);
      const Eigen::MatrixXd VVt = V * V.transpose();
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          const double w = VVt(p, q);
          if (w != 0.0) tr = tr + w * Hz[0][std::min(p, q)][std::max(p, q)];
        }
      out.half_trace = 0.5 * tr;
      return out;
    }
    a.assign(m, Expr());
    for (Eigen::Index k = 0; k < m; ++k) {
      a[k] = activation_expr(act, z[k]);
      const Expr d1 = detail::d1_expr(act, z[k]);
      const Expr d2 = detail::d2_expr(act, z[k]);
      for (int p = 0; p < n; ++p)
        for (int q = p; q < n; ++q) Hz[k][p][q] = d2 * (Jz[k][p] * Jz[k][q]) + d1 * Hz[k][p][q];
      for (int p = 0; p < n; ++p) Jz[k][p] = d1 * Jz[k][p];
    }
    J = std::move(Jz);
    H = std::move(Hz);
  }
  return out;
}

}  // namespace sncbf
