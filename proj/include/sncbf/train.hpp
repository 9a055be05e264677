#pragma once

// Synthesis: the sampled trainer with Lipschitz certificates and the
// verification-in-the-loop trainer.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sncbf/generator.hpp"
#include "sncbf/lmi.hpp"
#include "sncbf/qp.hpp"
#include "sncbf/verify.hpp"

namespace sncbf {

// ---------------------------------------------------------------------------
// Datasets

struct Datasets {
  std::vector<Eigen::VectorXd> S;  // initial set
  std::vector<Eigen::VectorXd> U;  // unsafe set
  std::vector<Eigen::VectorXd> D;  // whole state box
  double eps_bar = 0.0;
};

inline constexpr double kMaxGridPoints = 1e7;

// Regular grid over X whose cells have half-diagonal at most eps_bar.
inline std::vector<Eigen::VectorXd> covering_grid(const Box& X, double eps_bar) {
  if (!(eps_bar > 0.0)) throw Error("sampling radius must be positive");
  const int n = static_cast<int>(X.size());
  const double spacing = 2.0 * eps_bar / std::sqrt(static_cast<double>(n));
  std::vector<long> count(n);
  double total = 1.0;
  for (int i = 0; i < n; ++i) {
    const double w = X[i].hi - X[i].lo;
    count[i] = w > 0.0 ? static_cast<long>(std::ceil(w / spacing - 1e-12)) + 1 : 1;
    total *= static_cast<double>(count[i]);
  }
  if (total > kMaxGridPoints) throw Error("ε̄ too small for desk scale");
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(static_cast<std::size_t>(total));
  std::vector<long> idx(n, 0);
  Eigen::VectorXd x(n);
  for (;;) {
    for (int i = 0; i < n; ++i)
      x(i) = count[i] > 1 ? X[i].lo + (X[i].hi - X[i].lo) * static_cast<double>(idx[i]) / static_cast<double>(count[i] - 1)
                          : 0.5 * (X[i].lo + X[i].hi);
    pts.push_back(x);
    int d = 0;
    while (d < n && ++idx[d] == count[d]) idx[d++] = 0;
    if (d == n) break;
  }
  return pts;
}

// The grid is deterministic; the seed is accepted for interface symmetry.
inline Datasets sample_datasets(const RegionSpec& regions, double eps_bar, std::uint64_t /*seed*/ = 0) {
  Datasets d;
  d.eps_bar = eps_bar;
  d.D = covering_grid(regions.X, eps_bar);
  for (const auto& x : d.D) {
    if (regions.in_initial(x)) d.S.push_back(x);
    if (in_unsafe(regions, x)) d.U.push_back(x);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Per-sample parameter gradients of a single-hidden-layer net.
// Layout: W1 row-major (M x n), r1, W2, r2.

struct ShallowLayout {
  Eigen::Index n, M;
  explicit ShallowLayout(const Mlp& net) : n(net.input_dim()), M(net.hidden_width()) {}
  Eigen::Index w1(Eigen::Index j, Eigen::Index i) const { return j * n + i; }
  Eigen::Index r1(Eigen::Index j) const { return M * n + j; }
  Eigen::Index w2(Eigen::Index j) const { return M * n + M + j; }
  Eigen::Index r2() const { return M * n + 2 * M; }
};

// g += scale * dB/dtheta
inline void add_b_grad(const Mlp& net, const Eigen::VectorXd& x, double scale, Eigen::VectorXd& g) {
  const ShallowLayout L(net);
  const Eigen::VectorXd z = net.preactivation(x);
  const Eigen::VectorXd W2 = net.W2();
  for (Eigen::Index j = 0; j < L.M; ++j) {
    const ActivationDerivs s = activation_derivs(net.activation(), z(j));
    g(L.w2(j)) += scale * s.s0;
    const double a = scale * W2(j) * s.s1;
    g(L.r1(j)) += a;
    for (Eigen::Index i = 0; i < L.n; ++i) g(L.w1(j, i)) += a * x(i);
  }
  g(L.r2()) += scale;
}

// g += scale * d/dtheta [ grad B . F + 1/2 tr(V' H V) + k B ] with F held fixed.
inline void add_generator_grad(const Mlp& net, const Eigen::MatrixXd& V, double k, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& F, double scale, Eigen::VectorXd& g) {
  const ShallowLayout L(net);
  const Eigen::VectorXd z = net.preactivation(x);
  const Eigen::VectorXd W2 = net.W2();
  const Eigen::MatrixXd VVt = V * V.transpose();
  for (Eigen::Index j = 0; j < L.M; ++j) {
    const ActivationDerivs s = activation_derivs(net.activation(), z(j));
    const Eigen::VectorXd w = net.W1().row(j).transpose();
    const double a = w.dot(F);
    const Eigen::VectorXd Pw = VVt * w;
    const double q = w.dot(Pw);
    g(L.w2(j)) += scale * (s.s1 * a + 0.5 * s.s2 * q + k * s.s0);
    const double dz = scale * W2(j) * (s.s2 * a + 0.5 * s.s3 * q + k * s.s1);
    g(L.r1(j)) += dz;
    for (Eigen::Index i = 0; i < L.n; ++i)
      g(L.w1(j, i)) += dz * x(i) + scale * W2(j) * (s.s1 * F(i) + s.s2 * Pw(i));
  }
  g(L.r2()) += scale * k;
}

// ReLU lower bound B̃ = sum_j (W2j z_j / 2 - c_j z_j^2 / 2) + r2 with
// c_j = |W2j| / R_j; the ties in |z_j| are ignored.
inline void add_tilde_b_grad(const Mlp& net, const NeuronBounds& R, const Eigen::VectorXd& x, double scale,
                             Eigen::VectorXd& g) {
  const ShallowLayout L(net);
  const Eigen::VectorXd z = net.preactivation(x);
  const Eigen::VectorXd W2 = net.W2();
  for (Eigen::Index j = 0; j < L.M; ++j) {
    const double c = std::fabs(W2(j)) / R.R(j);
    const double e = (W2(j) < 0.0 ? -1.0 : 1.0) / R.R(j);
    g(L.w2(j)) += scale * (0.5 * z(j) - 0.5 * e * z(j) * z(j));
    const double dz = scale * (0.5 * W2(j) - c * z(j));
    g(L.r1(j)) += dz;
    for (Eigen::Index i = 0; i < L.n; ++i) g(L.w1(j, i)) += dz * x(i);
  }
  g(L.r2()) += scale;
}

// g += scale * d/dtheta [ grad B̃ . F - 1/2 sum c_j |V' w_j|^2 + k B̃ ].
inline void add_tilde_generator_grad(const Mlp& net, const NeuronBounds& R, const Eigen::MatrixXd& V, double k,
                                     const Eigen::VectorXd& x, const Eigen::VectorXd& F, double scale,
                                     Eigen::VectorXd& g) {
  const ShallowLayout L(net);
  const Eigen::VectorXd z = net.preactivation(x);
  const Eigen::VectorXd W2 = net.W2();
  const Eigen::MatrixXd VVt = V * V.transpose();
  for (Eigen::Index j = 0; j < L.M; ++j) {
    const double c = std::fabs(W2(j)) / R.R(j);
    const double e = (W2(j) < 0.0 ? -1.0 : 1.0) / R.R(j);
    const Eigen::VectorXd w = net.W1().row(j).transpose();
    const double a = w.dot(F);
    const Eigen::VectorXd Pw = VVt * w;
    const double q = w.dot(Pw);
    const double zj = z(j);
    g(L.w2(j)) += scale * (0.5 * a + 0.5 * k * zj + e * (-zj * a - 0.5 * q - 0.5 * k * zj * zj));
    const double dz = scale * (-c * a + k * (0.5 * W2(j) - c * zj));
    g(L.r1(j)) += dz;
    const double coefF = scale * (0.5 * W2(j) - c * zj);
    for (Eigen::Index i = 0; i < L.n; ++i) g(L.w1(j, i)) += dz * x(i) + coefF * F(i) - scale * c * Pw(i);
  }
  g(L.r2()) += scale * k;
}

// Central differences of a scalar function of the parameters.
inline Eigen::VectorXd fd_gradient(const Mlp& net, const std::function<double(const Mlp&)>& f, double h = 1e-6) {
  const Eigen::VectorXd p = net.params();
  Eigen::VectorXd g(p.size());
  Mlp work = net;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    Eigen::VectorXd q = p;
    q(i) = p(i) + h;
    work.set_params(q);
    const double fp = f(work);
    q(i) = p(i) - h;
    work.set_params(q);
    const double fm = f(work);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

struct LossGrad {
  double value = 0.0;
  Eigen::VectorXd grad;
};

// ---------------------------------------------------------------------------
// Sampled trainer

struct QValues {
  double q1 = 0.0, q2 = 0.0, q3 = 0.0;
  bool initial = false, unsafe = false;
  Eigen::VectorXd u;
  bool infeasible = false;
};

// The QP asks for lambda . u + xi >= margin; q3 = -(lambda . u + xi).
inline QValues q_values(const Mlp& net, const StochasticAffineSystem& sys, double k, double delta,
                        const RegionSpec& regions, const InputSet& U, const Eigen::VectorXd& x, double margin = 0.0) {
  QValues q;
  const GeneratorTerms t = lambda_xi_smooth(net, sys, k, x);
  const double B = net.forward(x);
  q.initial = regions.in_initial(x);
  q.unsafe = in_unsafe(regions, x);
  q.q1 = q.initial ? -B : 0.0;
  q.q2 = q.unsafe ? B + delta : 0.0;
  const QpResult r = sncbf_qp_control(t, Eigen::VectorXd::Zero(sys.n_u), U, margin);
  q.u = r.u;
  q.infeasible = r.infeasible;
  q.q3 = -t.value(r.u);
  return q;
}

inline double compute_psi_star(const Mlp& net, const StochasticAffineSystem& sys, double k, double delta,
                               const Datasets& d, const RegionSpec& regions, const InputSet& U, double margin = 0.0) {
  if (d.S.empty() && d.U.empty() && d.D.empty()) throw Error("empty datasets");
  double psi = -std::numeric_limits<double>::infinity();
  for (const auto& x : d.S) psi = std::max(psi, -net.forward(x));
  for (const auto& x : d.U) psi = std::max(psi, net.forward(x) + delta);
  for (const auto& x : d.D) psi = std::max(psi, q_values(net, sys, k, delta, regions, U, x, margin).q3);
  return psi;
}

inline bool check_validity(double L_max, double eps_bar, double psi_star) { return L_max * eps_bar + psi_star <= 0.0; }

inline double loss_validity(double L_max, double eps_bar, double psi) { return std::max(0.0, L_max * eps_bar + psi); }
inline double loss_validity_dpsi(double L_max, double eps_bar, double psi) {
  return L_max * eps_bar + psi > 0.0 ? 1.0 : 0.0;
}

// Mean hinge max(0, q - psi) over the S, U and D samples; the gradient holds
// the QP controls fixed.
inline LossGrad loss_smooth_grad(const Mlp& net, const StochasticAffineSystem& sys, double k, double delta,
                                 const Datasets& d, const RegionSpec& regions, const InputSet& U, double psi,
                                 double margin = 0.0, bool with_grad = true) {
  net.require_single_hidden("loss_smooth");
  LossGrad out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
  const double N = static_cast<double>(d.S.size() + d.U.size() + d.D.size());
  if (N == 0.0) return out;
  for (const auto& x : d.S) {
    const double v = (regions.in_initial(x) ? -net.forward(x) : 0.0) - psi;
    if (v > 0.0) {
      out.value += v;
      if (with_grad && regions.in_initial(x)) add_b_grad(net, x, -1.0 / N, out.grad);
    }
  }
  for (const auto& x : d.U) {
    const double v = (in_unsafe(regions, x) ? net.forward(x) + delta : 0.0) - psi;
    if (v > 0.0) {
      out.value += v;
      if (with_grad && in_unsafe(regions, x)) add_b_grad(net, x, 1.0 / N, out.grad);
    }
  }
  for (const auto& x : d.D) {
    const QValues q = q_values(net, sys, k, delta, regions, U, x, margin);
    const double v = q.q3 - psi;
    if (v > 0.0) {
      out.value += v;
      if (with_grad) add_generator_grad(net, sys.V, k, x, sys.velocity(x, q.u), -1.0 / N, out.grad);
    }
  }
  out.value /= N;
  return out;
}

inline double loss_smooth(const Mlp& net, const StochasticAffineSystem& sys, double k, double delta, const Datasets& d,
                          const RegionSpec& regions, const InputSet& U, double psi, double margin = 0.0) {
  return loss_smooth_grad(net, sys, k, delta, d, regions, U, psi, margin, false).value;
}

struct SmoothTrainConfig {
  int hidden = 20;
  Activation activation = Activation::Softplus;
  double eps_bar = 0.01;
  double L_h = 1.0, L_dh = 2.0, L_d2h = 0.1, L_x = 1.0;
  double delta = 1e-3;
  double k = 1.0;
  std::array<double, 3> barrier{1e-4, 1e-4, 1e-4};
  double lr = 10.0;
  double lr_barrier = 1e-2;  // theta part of the barrier step
  double lr_omega = 1.0;     // multiplier part of the barrier step
  double lr_psi = 1e-3;
  double psi0 = 0.0;
  int max_epochs = 2000;
  std::uint64_t seed = 1;
  // Hidden units start as random ridges s (d . (x - c) - t) with unit d,
  // offset t uniform in [0, ridge_offset * half-width] and small output
  // weights; ridge_slope = 0 keeps the uniform fan-in initialization.
  double ridge_slope = 4.0;
  double ridge_offset = 0.8;
  double output_scale = 0.01;

  double l_max() const { return std::max(L_h, L_h + L_dh * L_x + L_d2h); }
};

struct History {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct SmoothTrainResult {
  Mlp net;
  CertificateSet certificates;
  double psi = 0.0;
  double psi_star = 0.0;
  bool certified = false;
  bool valid = false;
  bool converged = false;
  int epochs = 0;
  History history;
  std::string diagnostics;
};

// Margin the training QP asks for: a hair beyond -psi so that q3 <= psi holds
// without rounding residue.
inline double qp_margin_for(double psi) { return -psi + 1e-9 * (1.0 + std::fabs(psi)); }

// Largest log det over scalar multipliers omega * 1 for one certificate.
inline void initialize_omegas(const Mlp& net, const Eigen::MatrixXd& V, CertificateSet& cs) {
  const EffectiveWeights e = effective_weights(net.W1(), net.W2(), V);
  const Eigen::MatrixXd outs[3] = {net.W2().transpose(), e.W2_hat, e.W2_bar};
  for (int i = 0; i < 3; ++i) {
    auto& c = cs.certs[i];
    double best = -std::numeric_limits<double>::infinity(), best_w = 1.0;
    for (int p = -40; p <= 40; ++p) {
      const double w = std::pow(10.0, p / 10.0);
      const Eigen::VectorXd om = Eigen::VectorXd::Constant(net.hidden_width(), w);
      const LogdetTerm t = logdet_term(build_m_matrix(net.W1(), outs[i], om, c.L, c.slopes.lo, c.slopes.hi), 1.0);
      if (!t.penalty && -t.value > best) {
        best = -t.value;
        best_w = w;
      }
    }
    c.omega = Eigen::VectorXd::Constant(net.hidden_width(), best_w);
  }
}

inline Mlp ridge_init(const Box& X, int hidden, Activation act, double slope, double offset, double out_scale,
                      std::uint64_t seed) {
  const int n = static_cast<int>(X.size());
  Mlp m({n, hidden, 1}, act);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double half = 0.0;
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) {
    half = std::max(half, 0.5 * (X[i].hi - X[i].lo));
    c(i) = 0.5 * (X[i].lo + X[i].hi);
  }
  for (int j = 0; j < hidden; ++j) {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = g(rng);
    d.normalize();
    const double t = u(rng) * offset * half;
    m.weight(0).row(j) = slope * d.transpose();
    m.bias(0)(j) = -slope * (d.dot(c) + t);
    m.weight(1)(0, j) = (2.0 * u(rng) - 1.0) * out_scale;
  }
  return m;
}

inline SmoothTrainResult train_verifiable_smooth(const SmoothTrainConfig& cfg, const Benchmark& bm,
                                                 const Mlp* init = nullptr) {
  if (cfg.activation == Activation::Relu) throw Error("the sampled trainer needs a smooth activation");
  SmoothTrainResult res;
  const Datasets d = sample_datasets(bm.regions, cfg.eps_bar, cfg.seed);
  const int n = bm.regions.dim();
  Mlp net = init                    ? *init
            : cfg.ridge_slope > 0.0 ? ridge_init(bm.regions.X, cfg.hidden, cfg.activation, cfg.ridge_slope,
                                                 cfg.ridge_offset, cfg.output_scale, cfg.seed)
                                    : Mlp::random({n, cfg.hidden, 1}, cfg.activation, cfg.seed);
  net.require_single_hidden("train_verifiable_smooth");
  const Eigen::MatrixXd& V = bm.system.V;
  CertificateSet cs = make_certificates(net.activation(), net.hidden_width(), cfg.L_h, cfg.L_dh, cfg.L_d2h);
  initialize_omegas(net, V, cs);
  double psi = cfg.psi0;
  const double Lmax = cfg.l_max();
  res.history.columns = {"epoch", "L_theta", "L_M", "L_v", "psi"};

  auto barrier_value = [&](const Mlp& m, const CertificateSet& s) {
    const auto Ms = certificate_matrices(m, V, s);
    return logdet_barrier_loss({Ms[0], Ms[1], Ms[2]}, {cfg.barrier[0], cfg.barrier[1], cfg.barrier[2]});
  };

  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    const double margin = qp_margin_for(psi);
    const LossGrad lt = loss_smooth_grad(net, bm.system, bm.alpha_gain * cfg.k, cfg.delta, d, bm.regions, bm.inputs,
                                         psi, margin);
    const bool cert = certified(net, V, cs);
    const double LM = barrier_value(net, cs);
    const double Lv = loss_validity(Lmax, cfg.eps_bar, psi);
    res.history.rows.push_back({static_cast<double>(epoch), lt.value, LM, Lv, psi});
    if (lt.value == 0.0 && cert && Lv == 0.0) {
      res.converged = true;
      break;
    }
    // theta on L_theta, kept inside the certified set once there
    if (lt.value > 0.0) {
      const Eigen::VectorXd p0 = net.params();
      double step = cfg.lr;
      for (int bt = 0; bt < 30; ++bt, step *= 0.5) {
        net.set_params(p0 - step * lt.grad);
        if (!cert || certified(net, V, cs)) break;
        if (bt == 29) net.set_params(p0);
      }
    }
    // (theta, Omegas) on L_M
    {
      const bool cert1 = certified(net, V, cs);
      const BarrierGradient bg = barrier_loss_grad(net, V, cs, cfg.barrier);
      const Mlp net0 = net;
      const CertificateSet cs0 = cs;
      double step = cfg.lr_barrier;
      for (int bt = 0; bt < 30; ++bt, step *= 0.5) {
        net = net0;
        cs = cs0;
        net.weight(0) -= step * bg.dW1;
        net.weight(1).row(0) -= step * bg.dW2.transpose();
        for (int i = 0; i < 3; ++i) cs.certs[i].omega = (cs.certs[i].omega - step / cfg.lr_barrier * cfg.lr_omega * bg.domega[i]).cwiseMax(0.0);
        if (!cert1 || certified(net, V, cs)) break;
        if (bt == 29) {
          net = net0;
          cs = cs0;
        }
      }
    }
    psi -= cfg.lr_psi * loss_validity_dpsi(Lmax, cfg.eps_bar, psi);
  }
  res.epochs = epoch;
  res.net = net;
  res.certificates = cs;
  res.psi = psi;
  res.certified = certified(net, V, cs);
  res.psi_star = compute_psi_star(net, bm.system, bm.alpha_gain * cfg.k, cfg.delta, d, bm.regions, bm.inputs,
                                  qp_margin_for(psi));
  res.valid = res.certified && check_validity(Lmax, cfg.eps_bar, res.psi_star);
  if (!res.valid) {
    res.diagnostics = "epochs=" + std::to_string(res.epochs) + " certified=" + (res.certified ? "true" : "false") +
                      " L_max*eps+psi*=" + format_number(Lmax * cfg.eps_bar + res.psi_star);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Verification-in-the-loop losses

// Safe-hinge placement. ByMode: initial samples for smooth nets, every safe
// sample for ReLU nets. Safe hinges act on B except SafeLower and the ReLU
// initial-set hinge, which act on B̃.
enum class SafeHinge { ByMode, Initial, Safe, SafeLower };

inline const char* to_string(SafeHinge s) {
  switch (s) {
    case SafeHinge::ByMode: return "by_mode";
    case SafeHinge::Initial: return "initial";
    case SafeHinge::Safe: return "safe";
    case SafeHinge::SafeLower: return "safe_lower";
  }
  return "?";
}

inline SafeHinge safe_hinge_from_string(const std::string& s) {
  for (SafeHinge h : {SafeHinge::ByMode, SafeHinge::Initial, SafeHinge::Safe, SafeHinge::SafeLower})
    if (s == to_string(h)) return h;
  throw ConfigError("unknown safe hinge '" + s + "' (expected by_mode, initial, safe or safe_lower)");
}

// Safe hinge max(0, eps - B) on the selected samples; unsafe hinge
// max(0, B + eps) on unsafe samples.
inline LossGrad loss_correct_grad(const BarrierView& b, const RegionSpec& regions, const std::vector<Eigen::VectorXd>& pts,
                                  double eps, bool with_grad = true, SafeHinge hinge = SafeHinge::ByMode) {
  LossGrad out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.net.num_params()));
  if (pts.empty()) return out;
  const double N = static_cast<double>(pts.size());
  if (hinge == SafeHinge::ByMode) hinge = b.relu() ? SafeHinge::Safe : SafeHinge::Initial;
  // 0: no safe hinge, 1: on B, 2: on B̃ (ReLU) or B.
  auto safe_term = [&](const Eigen::VectorXd& x) {
    switch (hinge) {
      case SafeHinge::Safe: return 1;
      case SafeHinge::SafeLower: return 2;
      default: return regions.in_initial(x) ? 2 : 0;
    }
  };
  auto value_of = [&](const Mlp& net) {
    const BarrierView v{net, b.R};
    double s = 0.0;
    for (const auto& x : pts) {
      if (in_unsafe(regions, x)) {
        s += std::max(0.0, net.forward(x) + eps);
      } else if (const int t = safe_term(x)) {
        s += std::max(0.0, eps - (t == 1 ? net.forward(x) : v.lower(x)));
      }
    }
    return s / N;
  };
  out.value = value_of(b.net);
  if (!with_grad) return out;
  if (!b.analytic()) {
    out.grad = fd_gradient(b.net, value_of);
    return out;
  }
  for (const auto& x : pts) {
    if (in_unsafe(regions, x)) {
      if (b.net.forward(x) + eps > 0.0) add_b_grad(b.net, x, 1.0 / N, out.grad);
    } else if (const int t = safe_term(x)) {
      if (t == 2 && b.relu()) {
        if (eps - b.lower(x) > 0.0) add_tilde_b_grad(b.net, *b.R, x, -1.0 / N, out.grad);
      } else if (eps - b.net.forward(x) > 0.0) {
        add_b_grad(b.net, x, -1.0 / N, out.grad);
      }
    }
  }
  return out;
}

inline double loss_correct(const BarrierView& b, const RegionSpec& regions, const std::vector<Eigen::VectorXd>& pts,
                           double eps, SafeHinge hinge = SafeHinge::ByMode) {
  return loss_correct_grad(b, regions, pts, eps, false, hinge).value;
}

// Mean relaxed-QP objective; the gradient is -nu times the constraint's
// parameter sensitivity at the optimal control.
inline LossGrad loss_feasible_grad(const BarrierView& b, const StochasticAffineSystem& sys, double k,
                                   const std::vector<Eigen::VectorXd>& pts, const Eigen::VectorXd& u_ref,
                                   double penalty, const InputSet& U, double margin = 0.0, bool with_grad = true) {
  LossGrad out;
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b.net.num_params()));
  if (pts.empty()) return out;
  const double N = static_cast<double>(pts.size());
  auto value_of = [&](const Mlp& net) {
    const BarrierView v{net, b.R};
    double s = 0.0;
    for (const auto& x : pts) s += relaxed_qp(v.terms(sys, k, x), u_ref, U, penalty, margin).objective;
    return s / N;
  };
  if (!with_grad || !b.analytic()) {
    out.value = value_of(b.net);
    if (with_grad) out.grad = fd_gradient(b.net, value_of);
    return out;
  }
  for (const auto& x : pts) {
    const RelaxedQp q = relaxed_qp(b.terms(sys, k, x), u_ref, U, penalty, margin);
    out.value += q.objective;
    if (q.nu == 0.0) continue;
    const Eigen::VectorXd F = sys.velocity(x, q.u);
    if (b.relu())
      add_tilde_generator_grad(b.net, *b.R, sys.V, k, x, F, -q.nu / N, out.grad);
    else
      add_generator_grad(b.net, sys.V, k, x, F, -q.nu / N, out.grad);
  }
  out.value /= N;
  return out;
}

inline double loss_feasible(const BarrierView& b, const StochasticAffineSystem& sys, double k,
                            const std::vector<Eigen::VectorXd>& pts, const Eigen::VectorXd& u_ref, double penalty,
                            const InputSet& U, double margin = 0.0) {
  return loss_feasible_grad(b, sys, k, pts, u_ref, penalty, U, margin, false).value;
}

// ---------------------------------------------------------------------------
// Verification-in-the-loop trainer

struct VitlConfig {
  std::vector<int> hidden{16};
  Activation activation = Activation::Relu;
  double lambda_f = 4.0;
  double lambda_c = 1.0;
  double eps = 0.05;             // correctness margin
  double penalty = 1.0;          // slack weight in the relaxed QP
  double feasibility_margin = 0.0;
  double lr = 1e-4;
  int max_rounds = 100;
  int epochs_per_round = 5;
  int batch_size = 1;            // 0: full batch
  double eps_bar = 0.05;         // initial grid radius
  int jitter_copies = 10;        // CE copies with sigma = eps_bar / 2
  SafeHinge safe_hinge = SafeHinge::ByMode;
  double k = 1.0;
  BnbConfig bnb;
  std::uint64_t seed = 1;
};

struct CounterexampleRecord {
  int round = 0;
  Eigen::VectorXd x;
  ViolationKind kind = ViolationKind::None;
  double violation = 0.0;  // h(x) for correctness, best lambda.u + xi for feasibility
};

struct VitlResult {
  Mlp net;
  VerificationOutcome outcome;
  ReluArtifacts artifacts;  // ReLU nets: from the last verification
  std::vector<Eigen::VectorXd> dataset;
  std::vector<CounterexampleRecord> counterexamples;
  int rounds = 0;
  int epochs = 0;
  double verify_seconds = 0.0;
  History history;
};

inline NeuronBounds interval_neuron_bounds(const Mlp& net, const Box& X) {
  const Eigen::Index M = net.hidden_width();
  NeuronBounds R;
  R.R.resize(M);
  for (Eigen::Index j = 0; j < M; ++j) {
    Interval z = Interval::point(net.r1()(j));
    for (Eigen::Index i = 0; i < net.input_dim(); ++i) z = z + X[i] * Interval::point(net.W1()(j, i));
    R.R(j) = std::max({std::fabs(z.lo), std::fabs(z.hi), 1e-6});
  }
  return R;
}

inline VitlResult train_vitl(const VitlConfig& cfg, const Benchmark& bm, const Mlp* init = nullptr) {
  if (cfg.lambda_f < 0.0 || cfg.lambda_c < 0.0) throw Error("loss weights must be non-negative");
  const RegionSpec& regions = bm.regions;
  const int n = regions.dim();
  const double k = bm.alpha_gain * cfg.k;
  std::vector<int> sizes{n};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  VitlResult res;
  res.net = init ? *init : Mlp::random(sizes, cfg.activation, cfg.seed);
  Mlp& net = res.net;
  const bool relu = !net.smooth();
  if (relu) net.require_single_hidden("ReLU training");
  if (relu) net.weight(1) = net.weight(1).cwiseMax(0.0);
  res.dataset = covering_grid(regions.X, cfg.eps_bar);
  res.history.columns = {"round", "epochs", "L_f", "L_c", "dataset_size", "counterexamples", "status"};
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const Eigen::VectorXd u_ref = Eigen::VectorXd::Zero(bm.system.n_u);

  auto feasibility_points = [&](const BarrierView& b, const std::vector<Eigen::VectorXd>& pts) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& x : pts)
      if (b.lower(x) >= 0.0) out.push_back(x);
    return out;
  };

  for (int round = 0;; ++round) {
    res.rounds = round;
    NeuronBounds R;
    const auto verify_start = std::chrono::steady_clock::now();
    if (relu) {
      res.artifacts = relu_artifacts(net, regions, cfg.seed);
      res.outcome = res.artifacts.empty_superlevel ? verify_correctness_relu(net, regions, {}, cfg.bnb)
                                                   : verify_relu(net, bm.system, regions, k, bm.inputs, res.artifacts, cfg.bnb);
      R = res.artifacts.empty_superlevel ? interval_neuron_bounds(net, regions.X) : res.artifacts.R;
      for (Eigen::Index j = 0; j < R.R.size(); ++j) R.R(j) = std::max(R.R(j), 1e-6);
    } else {
      res.outcome = verify(net, bm.system, regions, k, bm.inputs, cfg.bnb, cfg.seed);
    }
    res.verify_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - verify_start).count();
    const BarrierView view{net, relu ? &R : nullptr};
    {
      const double Lf = loss_feasible(view, bm.system, k, feasibility_points(view, res.dataset), u_ref, cfg.penalty,
                                      bm.inputs, cfg.feasibility_margin);
      const double Lc = loss_correct(view, regions, res.dataset, cfg.eps, cfg.safe_hinge);
      res.history.rows.push_back({static_cast<double>(round), static_cast<double>(res.epochs), Lf, Lc,
                                  static_cast<double>(res.dataset.size()),
                                  static_cast<double>(res.counterexamples.size()),
                                  static_cast<double>(static_cast<int>(res.outcome.status))});
    }
    // Verification starts from a point of the super-level set; an empty one is
    // not a usable barrier.
    const bool vacuous = relu && res.artifacts.empty_superlevel;
    if (res.outcome.status == VerifyStatus::Valid && !vacuous) break;
    if (round >= cfg.max_rounds) break;
    if (res.outcome.status == VerifyStatus::CounterexampleFound) {
      const Eigen::VectorXd& x = res.outcome.counterexample;
      CounterexampleRecord rec{round, x, res.outcome.kind, 0.0};
      if (res.outcome.kind == ViolationKind::Correctness) {
        rec.violation = regions.h_value(x);
      } else {
        const GeneratorTerms t = view.terms(bm.system, k, x);
        rec.violation = t.xi + support_value(t.lambda, bm.inputs);
      }
      res.counterexamples.push_back(rec);
      res.dataset.push_back(x);
      std::normal_distribution<double> g(0.0, cfg.eps_bar / 2.0);
      for (int c = 0; c < cfg.jitter_copies; ++c) {
        Eigen::VectorXd y = x;
        for (int i = 0; i < n; ++i) y(i) = std::clamp(x(i) + g(rng), regions.X[i].lo, regions.X[i].hi);
        res.dataset.push_back(y);
      }
    }
    // Inner loop: plain gradient descent on lambda_f L_f + lambda_c L_c.
    std::vector<std::size_t> order(res.dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t bs = cfg.batch_size > 0 ? static_cast<std::size_t>(cfg.batch_size) : order.size();
    for (int e = 0; e < cfg.epochs_per_round; ++e, ++res.epochs) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += bs) {
        std::vector<Eigen::VectorXd> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) batch.push_back(res.dataset[order[i]]);
        const BarrierView b{net, relu ? &R : nullptr};
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.num_params()));
        if (cfg.lambda_f > 0.0) {
          const auto fp = feasibility_points(b, batch);
          if (!fp.empty()) {
            const LossGrad lf = loss_feasible_grad(b, bm.system, k, fp, u_ref, cfg.penalty, bm.inputs, cfg.feasibility_margin);
            grad += cfg.lambda_f * lf.grad * (static_cast<double>(fp.size()) / static_cast<double>(batch.size()));
          }
        }
        if (cfg.lambda_c > 0.0) grad += cfg.lambda_c * loss_correct_grad(b, regions, batch, cfg.eps, true, cfg.safe_hinge).grad;
        net.set_params(net.params() - cfg.lr * grad);
        if (relu) net.weight(1) = net.weight(1).cwiseMax(0.0);
      }
    }
  }
  return res;
}

}  // namespace sncbf
