#pragma once

// Feedforward barrier network: forward pass, state derivatives, ReLU
// activation regions and their affine forms, serialization.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sncbf/error.hpp"
#include "sncbf/expr.hpp"

namespace sncbf {

enum class Activation { Relu, Softplus, Tanh };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  if (s == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + s + "'");
}

// sigma and its first three derivatives.
struct ActivationDerivs {
  double s0, s1, s2, s3;
};

inline ActivationDerivs activation_derivs(Activation a, double z) {
  switch (a) {
    case Activation::Relu: return {z > 0.0 ? z : 0.0, z > 0.0 ? 1.0 : 0.0, 0.0, 0.0};
    case Activation::Softplus: {
      const double s = scalar::sigmoid(z);
      return {scalar::softplus(z), s, s * (1.0 - s), s * (1.0 - s) * (1.0 - 2.0 * s)};
    }
    case Activation::Tanh: {
      const double t = std::tanh(z);
      const double d = 1.0 - t * t;
      return {t, d, -2.0 * t * d, -2.0 * d * (1.0 - 3.0 * t * t)};
    }
  }
  return {};
}

// Per-hidden-layer activated neurons.
struct ActivationSet {
  std::vector<std::vector<bool>> layers;

  bool active(std::size_t layer, std::size_t j) const { return layers[layer][j]; }
  std::size_t count() const {
    std::size_t c = 0;
    for (const auto& l : layers)
      for (bool b : l) c += b;
    return c;
  }
  // Bits as '0'/'1' per neuron, layers separated by '|'.
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (i) s += '|';
      for (bool b : layers[i]) s += b ? '1' : '0';
    }
    return s;
  }
  static ActivationSet from_string(const std::string& s) {
    ActivationSet S;
    S.layers.emplace_back();
    for (char c : s) {
      if (c == '|')
        S.layers.emplace_back();
      else if (c == '0' || c == '1')
        S.layers.back().push_back(c == '1');
      else
        throw ConfigError("bad activation set string '" + s + "'");
    }
    return S;
  }
  bool operator==(const ActivationSet&) const = default;
  bool operator<(const ActivationSet& o) const { return layers < o.layers; }
};

struct RegionLinearForm {
  Eigen::VectorXd w;
  double r = 0.0;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Activation act) : sizes_(std::move(sizes)), act_(act) {
    if (sizes_.size() < 2) throw Error("network needs at least input and output layers");
    if (sizes_.back() != 1) throw Error("network output dimension must be 1");
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
      W_.push_back(Eigen::MatrixXd::Zero(sizes_[i + 1], sizes_[i]));
      b_.push_back(Eigen::VectorXd::Zero(sizes_[i + 1]));
    }
  }

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp random(std::vector<int> sizes, Activation act, std::uint64_t seed) {
    Mlp m(std::move(sizes), act);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < m.W_.size(); ++l) {
      const double a = 1.0 / std::sqrt(static_cast<double>(m.W_[l].cols()));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index i = 0; i < m.W_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < m.W_[l].cols(); ++j) m.W_[l](i, j) = u(rng);
      for (Eigen::Index i = 0; i < m.b_[l].size(); ++i) m.b_[l](i) = u(rng);
    }
    return m;
  }

  const std::vector<int>& sizes() const { return sizes_; }
  Activation activation() const { return act_; }
  bool smooth() const { return act_ != Activation::Relu; }
  int input_dim() const { return sizes_.front(); }
  int num_layers() const { return static_cast<int>(W_.size()); }
  int hidden_layers() const { return num_layers() - 1; }
  int hidden_width() const { return sizes_[1]; }

  Eigen::MatrixXd& weight(int l) { return W_[l]; }
  const Eigen::MatrixXd& weight(int l) const { return W_[l]; }
  Eigen::VectorXd& bias(int l) { return b_[l]; }
  const Eigen::VectorXd& bias(int l) const { return b_[l]; }

  // Single-hidden-layer accessors: W1 (M x n), r1 (M), W2 (M), r2.
  const Eigen::MatrixXd& W1() const { return W_[0]; }
  const Eigen::VectorXd& r1() const { return b_[0]; }
  Eigen::VectorXd W2() const { return W_[1].row(0).transpose(); }
  double r2() const { return b_[1](0); }

  void require_single_hidden(const char* what) const {
    if (num_layers() != 2) throw Error(std::string(what) + " requires exactly one hidden layer");
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) n += W_[l].size() + b_[l].size();
    return n;
  }

  // Parameters flattened layer by layer: W row-major, then bias.
  Eigen::VectorXd params() const {
    Eigen::VectorXd p(num_params());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < W_[l].cols(); ++j) p(k++) = W_[l](i, j);
      for (Eigen::Index i = 0; i < b_[l].size(); ++i) p(k++) = b_[l](i);
    }
    return p;
  }

  void set_params(const Eigen::VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != num_params()) throw Error("parameter vector size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W_.size(); ++l) {
      for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < W_[l].cols(); ++j) W_[l](i, j) = p(k++);
      for (Eigen::Index i = 0; i < b_[l].size(); ++i) b_[l](i) = p(k++);
    }
  }

  // First-layer pre-activations W1 x + r1.
  Eigen::VectorXd preactivation(const Eigen::VectorXd& x) const { return W_[0] * x + b_[0]; }

  double forward(const Eigen::VectorXd& x) const {
    check_input(x);
    Eigen::VectorXd a = x;
    for (int l = 0; l < num_layers(); ++l) {
      Eigen::VectorXd z = W_[l] * a + b_[l];
      if (l + 1 == num_layers()) return z(0);
      a = z.unaryExpr([this](double v) { return activation_derivs(act_, v).s0; });
    }
    return 0.0;
  }

  Eigen::VectorXd jacobian(const Eigen::VectorXd& x) const {
    check_input(x);
    Eigen::VectorXd a = x;
    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(x.size(), x.size());
    for (int l = 0; l < num_layers(); ++l) {
      Eigen::VectorXd z = W_[l] * a + b_[l];
      Eigen::MatrixXd Jz = W_[l] * J;
      if (l + 1 == num_layers()) return Jz.row(0).transpose();
      a.resize(z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        if (act_ == Activation::Relu && z(k) == 0.0) throw DomainError("nonsmooth point");
        const auto d = activation_derivs(act_, z(k));
        a(k) = d.s0;
        Jz.row(k) *= d.s1;
      }
      J = std::move(Jz);
    }
    return {};
  }

  // Forward second-order propagation of values, Jacobians and Hessians.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const {
    check_input(x);
    if (!smooth()) throw Error("hessian unsupported for relu networks");
    const Eigen::Index n = x.size();
    Eigen::VectorXd a = x;
    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n);
    std::vector<Eigen::MatrixXd> H(n, Eigen::MatrixXd::Zero(n, n));
    for (int l = 0; l < num_layers(); ++l) {
      const Eigen::MatrixXd& W = W_[l];
      Eigen::VectorXd z = W * a + b_[l];
      Eigen::MatrixXd Jz = W * J;
      std::vector<Eigen::MatrixXd> Hz(z.size(), Eigen::MatrixXd::Zero(n, n));
      for (Eigen::Index k = 0; k < z.size(); ++k)
        for (Eigen::Index i = 0; i < W.cols(); ++i)
          if (W(k, i) != 0.0) Hz[k] += W(k, i) * H[i];
      if (l + 1 == num_layers()) {
        Eigen::MatrixXd out = Hz[0];
        return 0.5 * (out + out.transpose());
      }
      a.resize(z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k) {
        const auto d = activation_derivs(act_, z(k));
        a(k) = d.s0;
        Hz[k] = d.s2 * Jz.row(k).transpose() * Jz.row(k) + d.s1 * Hz[k];
        Jz.row(k) *= d.s1;
      }
      J = std::move(Jz);
      H = std::move(Hz);
    }
    return {};
  }

  // Neurons with strictly positive pre-activation.
  ActivationSet activation_set(const Eigen::VectorXd& x) const {
    check_input(x);
    ActivationSet S;
    Eigen::VectorXd a = x;
    for (int l = 0; l + 1 < num_layers(); ++l) {
      Eigen::VectorXd z = W_[l] * a + b_[l];
      std::vector<bool> bits(z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k) bits[k] = z(k) > 0.0;
      S.layers.push_back(std::move(bits));
      a = z.cwiseMax(0.0);
    }
    return S;
  }

  // Pre-activation affine forms (rows of P, entries of q) of every hidden
  // layer under the fixed pattern S: z_l = P_l x + q_l.
  std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> region_preactivations(const ActivationSet& S) const {
    check_pattern(S);
    std::vector<std::pair<Eigen::MatrixXd, Eigen::VectorXd>> out;
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(input_dim(), input_dim());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(input_dim());
    for (int l = 0; l + 1 < num_layers(); ++l) {
      Eigen::MatrixXd Pz = W_[l] * P;
      Eigen::VectorXd qz = W_[l] * q + b_[l];
      out.emplace_back(Pz, qz);
      for (Eigen::Index k = 0; k < Pz.rows(); ++k) {
        if (!S.layers[l][k]) {
          Pz.row(k).setZero();
          qz(k) = 0.0;
        }
      }
      P = std::move(Pz);
      q = std::move(qz);
    }
    return out;
  }

  RegionLinearForm region_linear_form(const ActivationSet& S) const {
    check_pattern(S);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(input_dim(), input_dim());
    Eigen::VectorXd q = Eigen::VectorXd::Zero(input_dim());
    for (int l = 0; l < num_layers(); ++l) {
      Eigen::MatrixXd Pz = W_[l] * P;
      Eigen::VectorXd qz = W_[l] * q + b_[l];
      if (l + 1 < num_layers()) {
        for (Eigen::Index k = 0; k < Pz.rows(); ++k) {
          if (!S.layers[l][k]) {
            Pz.row(k).setZero();
            qz(k) = 0.0;
          }
        }
      }
      P = std::move(Pz);
      q = std::move(qz);
    }
    return {P.row(0).transpose(), q(0)};
  }

  bool operator==(const Mlp& o) const {
    if (sizes_ != o.sizes_ || act_ != o.act_) return false;
    for (std::size_t l = 0; l < W_.size(); ++l)
      if (W_[l] != o.W_[l] || b_[l] != o.b_[l]) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["activation"] = to_string(act_);
    j["layer_sizes"] = sizes_;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (std::size_t l = 0; l < W_.size(); ++l) {
      std::vector<double> w;
      for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
        for (Eigen::Index k = 0; k < W_[l].cols(); ++k) w.push_back(W_[l](i, k));
      j["weights"].push_back(w);
      j["biases"].push_back(std::vector<double>(b_[l].data(), b_[l].data() + b_[l].size()));
    }
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    try {
      for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "format_version" && k != "activation" && k != "layer_sizes" && k != "weights" && k != "biases")
          throw ConfigError("unknown model key '" + k + "'");
      }
      if (j.at("format_version").get<int>() != 1) throw ConfigError("unsupported model format_version");
      Mlp m(j.at("layer_sizes").get<std::vector<int>>(), activation_from_string(j.at("activation").get<std::string>()));
      const auto& ws = j.at("weights");
      const auto& bs = j.at("biases");
      if (ws.size() != m.W_.size() || bs.size() != m.b_.size()) throw ConfigError("model layer count mismatch");
      for (std::size_t l = 0; l < m.W_.size(); ++l) {
        auto w = ws[l].get<std::vector<double>>();
        auto b = bs[l].get<std::vector<double>>();
        if (w.size() != static_cast<std::size_t>(m.W_[l].size()) || b.size() != static_cast<std::size_t>(m.b_[l].size()))
          throw ConfigError("model weight shape mismatch in layer " + std::to_string(l));
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < m.W_[l].rows(); ++r)
          for (Eigen::Index c = 0; c < m.W_[l].cols(); ++c) m.W_[l](r, c) = w[k++];
        for (std::size_t r = 0; r < b.size(); ++r) m.b_[l](r) = b[r];
      }
      return m;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed model: ") + e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("malformed model: ") + e.what());
    }
  }

 private:
  void check_input(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim()) throw Error("input dimension mismatch");
  }
  void check_pattern(const ActivationSet& S) const {
    if (static_cast<int>(S.layers.size()) != hidden_layers()) throw Error("activation set layer count mismatch");
    for (int l = 0; l < hidden_layers(); ++l)
      if (static_cast<int>(S.layers[l].size()) != sizes_[l + 1]) throw Error("activation set width mismatch");
  }

  std::vector<int> sizes_;
  Activation act_ = Activation::Softplus;
  std::vector<Eigen::MatrixXd> W_;
  std::vector<Eigen::VectorXd> b_;
};

// Network output as an expression in the state variables.
inline Expr activation_expr(Activation a, const Expr& z) {
  switch (a) {
    case Activation::Relu: return max(z, Expr::constant(0.0));
    case Activation::Softplus: return softplus(z);
    case Activation::Tanh: return tanh(z);
  }
  return z;
}

}  // namespace sncbf
