#pragma once

// Lipschitz certificates for a single-hidden-layer network and for its
// derivative and Hessian-trace networks, with log-det barrier losses.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "sncbf/error.hpp"
#include "sncbf/nn.hpp"

namespace sncbf {

struct SlopeBounds {
  double lo = 0.0;
  double hi = 1.0;
};

// Range of sigma^(order) for order 1, 2, 3.
inline SlopeBounds derivative_bounds(Activation a, int order) {
  const double s3 = std::sqrt(3.0);
  switch (a) {
    case Activation::Softplus:
      if (order == 1) return {0.0, 1.0};
      if (order == 2) return {0.0, 0.25};
      return {-1.0 / (6.0 * s3), 1.0 / (6.0 * s3)};
    case Activation::Tanh:
      if (order == 1) return {0.0, 1.0};
      if (order == 2) return {-4.0 / (3.0 * s3), 4.0 / (3.0 * s3)};
      return {-2.0, 2.0 / 3.0};
    case Activation::Relu:
      if (order == 1) return {0.0, 1.0};
      break;
  }
  throw Error("no derivative bounds for this activation");
}

struct LipschitzCertificate {
  double L = 1.0;
  Eigen::VectorXd omega;  // diagonal of Omega, >= 0
  SlopeBounds slopes;
};

// [[L^2 I + 2ab W1' Ω W1, -(a+b) W1' Ω, 0], [-(a+b) Ω W1, 2Ω, -W2'], [0, -W2, I]]
// for a hidden layer W1 (M x n) with slope range [a, b] and output weights W2 (p x M).
inline Eigen::MatrixXd build_m_matrix(const Eigen::MatrixXd& W1, const Eigen::MatrixXd& W2, const Eigen::VectorXd& omega,
                                      double L, double a, double b) {
  const Eigen::Index M = W1.rows(), n = W1.cols(), p = W2.rows();
  if (W2.cols() != M || omega.size() != M) throw Error("certificate shape mismatch");
  const Eigen::MatrixXd Om = omega.asDiagonal();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n + M + p, n + M + p);
  const Eigen::MatrixXd G = W1.transpose() * Om * W1;
  out.block(0, 0, n, n) = L * L * Eigen::MatrixXd::Identity(n, n) + a * b * (G + G.transpose());
  out.block(n, 0, M, n) = -(a + b) * Om * W1;
  out.block(0, n, n, M) = out.block(n, 0, M, n).transpose();
  out.block(n, n, M, M) = 2.0 * Om;
  out.block(n + M, n, p, M) = -W2;
  out.block(n, n + M, M, p) = -W2.transpose();
  out.block(n + M, n + M, p, p) = Eigen::MatrixXd::Identity(p, p);
  return out;
}

struct EffectiveWeights {
  Eigen::MatrixXd W2_hat;     // n x M, gradient = W2_hat sigma'(z)
  Eigen::RowVectorXd W2_bar;  // 1 x M, tr(V' H V) = W2_bar sigma''(z)
};

inline Eigen::VectorXd diagonal_diffusion(const Eigen::MatrixXd& V) {
  if (V.rows() != V.cols()) throw Error("requires diagonal diffusion");
  for (Eigen::Index i = 0; i < V.rows(); ++i)
    for (Eigen::Index j = 0; j < V.cols(); ++j)
      if (i != j && V(i, j) != 0.0) throw Error("requires diagonal diffusion");
  return V.diagonal();
}

inline EffectiveWeights effective_weights(const Eigen::MatrixXd& W1, const Eigen::VectorXd& W2, const Eigen::MatrixXd& V) {
  const Eigen::VectorXd v = diagonal_diffusion(V);
  EffectiveWeights e;
  e.W2_hat = W1.transpose() * W2.asDiagonal();
  e.W2_bar.resize(W1.rows());
  for (Eigen::Index m = 0; m < W1.rows(); ++m) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < W1.cols(); ++j) s += v(j) * v(j) * e.W2_hat(j, m) * W1(m, j);
    e.W2_bar(m) = s;
  }
  return e;
}

inline constexpr double kBarrierPenalty = 1e4;

// -c log det M with the sensitivity D such that d(term) = -c tr(D dM).
// Outside the PD cone the term is c (P + |λ_min| P) and D = P v v'.
struct LogdetTerm {
  double value = 0.0;
  Eigen::MatrixXd D;
  bool penalty = false;
};

inline LogdetTerm logdet_term(const Eigen::MatrixXd& M, double c) {
  LogdetTerm t;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() == Eigen::Success) {
    const Eigen::MatrixXd Lm = llt.matrixL();
    double ld = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) ld += 2.0 * std::log(Lm(i, i));
    if (std::isfinite(ld)) {
      t.value = -c * ld;
      t.D = llt.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
      return t;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
  const double lmin = es.eigenvalues()(0);
  const Eigen::VectorXd v = es.eigenvectors().col(0);
  t.penalty = true;
  t.value = c * (kBarrierPenalty + std::fabs(lmin) * kBarrierPenalty);
  t.D = (lmin < 0.0 ? kBarrierPenalty : -kBarrierPenalty) * v * v.transpose();
  return t;
}

inline double logdet_barrier_loss(const std::vector<Eigen::MatrixXd>& Ms, const std::vector<double>& coeffs) {
  if (Ms.size() != coeffs.size()) throw Error("coefficient count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < Ms.size(); ++i) s += logdet_term(Ms[i], coeffs[i]).value;
  return s;
}

inline bool is_psd(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0) >= 0.0;
}

// The three certificates of a single-hidden-layer smooth net: B itself, its
// gradient network, and its Hessian-trace network.
struct CertificateSet {
  std::array<LipschitzCertificate, 3> certs;
};

inline CertificateSet make_certificates(Activation act, int hidden, double L_h, double L_dh, double L_d2h, double omega0 = 1.0) {
  CertificateSet cs;
  const double Ls[3] = {L_h, L_dh, L_d2h};
  for (int i = 0; i < 3; ++i) cs.certs[i] = {Ls[i], Eigen::VectorXd::Constant(hidden, omega0), derivative_bounds(act, i + 1)};
  return cs;
}

inline std::array<Eigen::MatrixXd, 3> certificate_matrices(const Mlp& net, const Eigen::MatrixXd& V, const CertificateSet& cs) {
  net.require_single_hidden("certificate_matrices");
  const EffectiveWeights e = effective_weights(net.W1(), net.W2(), V);
  const Eigen::MatrixXd outs[3] = {net.W2().transpose(), e.W2_hat, e.W2_bar};
  std::array<Eigen::MatrixXd, 3> Ms;
  for (int i = 0; i < 3; ++i) {
    const auto& c = cs.certs[i];
    Ms[i] = build_m_matrix(net.W1(), outs[i], c.omega, c.L, c.slopes.lo, c.slopes.hi);
  }
  return Ms;
}

inline bool certified(const Mlp& net, const Eigen::MatrixXd& V, const CertificateSet& cs) {
  for (const auto& M : certificate_matrices(net, V, cs))
    if (!is_psd(M)) return false;
  return true;
}

// Barrier loss sum_i -c_i log det M_i and its gradients.
struct BarrierGradient {
  double value = 0.0;
  Eigen::MatrixXd dW1;
  Eigen::VectorXd dW2;
  std::array<Eigen::VectorXd, 3> domega;
  bool penalty = false;
};

inline BarrierGradient barrier_loss_grad(const Mlp& net, const Eigen::MatrixXd& V, const CertificateSet& cs,
                                         const std::array<double, 3>& coeffs) {
  net.require_single_hidden("barrier_loss_grad");
  const Eigen::MatrixXd& W1 = net.W1();
  const Eigen::VectorXd W2 = net.W2();
  const Eigen::Index M = W1.rows(), n = W1.cols();
  const Eigen::VectorXd v = diagonal_diffusion(V);
  const EffectiveWeights e = effective_weights(W1, W2, V);
  const Eigen::MatrixXd outs[3] = {W2.transpose(), e.W2_hat, e.W2_bar};
  BarrierGradient g;
  g.dW1 = Eigen::MatrixXd::Zero(M, n);
  g.dW2 = Eigen::VectorXd::Zero(M);
  for (int i = 0; i < 3; ++i) {
    const auto& c = cs.certs[i];
    const double a = c.slopes.lo, b = c.slopes.hi;
    const Eigen::Index p = outs[i].rows();
    const Eigen::MatrixXd Mi = build_m_matrix(W1, outs[i], c.omega, c.L, a, b);
    const LogdetTerm t = logdet_term(Mi, coeffs[i]);
    g.value += t.value;
    g.penalty = g.penalty || t.penalty;
    const Eigen::MatrixXd G11 = t.D.block(0, 0, n, n);
    const Eigen::MatrixXd G21 = t.D.block(n, 0, M, n);
    const Eigen::MatrixXd G22 = t.D.block(n, n, M, M);
    const Eigen::MatrixXd G32 = t.D.block(n + M, n, p, M);
    const Eigen::MatrixXd Om = c.omega.asDiagonal();
    // tr(D dM) sensitivities; the loss gradient is -coeff times these.
    Eigen::MatrixXd sW1 = 4.0 * a * b * Om * W1 * G11 - 2.0 * (a + b) * Om * G21;
    Eigen::VectorXd sOm = (2.0 * a * b * (W1 * G11 * W1.transpose()).diagonal()) -
                          2.0 * (a + b) * (G21 * W1.transpose()).diagonal() + 2.0 * G22.diagonal();
    Eigen::MatrixXd sOut = -2.0 * G32;  // p x M
    g.domega[i] = -coeffs[i] * sOm;
    // Chain through the output weights of each network.
    Eigen::MatrixXd gOut = -coeffs[i] * sOut;
    g.dW1 += -coeffs[i] * sW1;
    if (i == 0) {
      g.dW2 += gOut.row(0).transpose();
    } else if (i == 1) {
      // W2_hat(j, m) = W1(m, j) W2(m)
      for (Eigen::Index m = 0; m < M; ++m)
        for (Eigen::Index j = 0; j < n; ++j) {
          g.dW1(m, j) += gOut(j, m) * W2(m);
          g.dW2(m) += gOut(j, m) * W1(m, j);
        }
    } else {
      // W2_bar(m) = W2(m) sum_j v_j^2 W1(m, j)^2
      for (Eigen::Index m = 0; m < M; ++m) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
          s += v(j) * v(j) * W1(m, j) * W1(m, j);
          g.dW1(m, j) += gOut(0, m) * 2.0 * W2(m) * v(j) * v(j) * W1(m, j);
        }
        g.dW2(m) += gOut(0, m) * s;
      }
    }
  }
  return g;
}

}  // namespace sncbf
