#pragma once

// Control-affine SDE models dx = (f + g u) dt + V dv, region specifications
// and the three benchmark presets.

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "sncbf/error.hpp"
#include "sncbf/expr.hpp"

namespace sncbf {

struct StochasticAffineSystem {
  int n_x = 0;
  int n_u = 0;
  int n_v = 0;
  std::vector<std::string> f_text;               // n_x
  std::vector<std::vector<std::string>> g_text;  // n_x rows of n_u
  std::vector<Expr> f;
  std::vector<std::vector<Expr>> g;
  Eigen::MatrixXd V;  // n_x x n_v

  static StochasticAffineSystem build(int n_x, int n_u, std::vector<std::string> f_text,
                                      std::vector<std::vector<std::string>> g_text, Eigen::MatrixXd V) {
    StochasticAffineSystem s;
    s.n_x = n_x;
    s.n_u = n_u;
    s.n_v = static_cast<int>(V.cols());
    if (static_cast<int>(f_text.size()) != n_x) throw ConfigError("drift must have state_dim entries");
    if (static_cast<int>(g_text.size()) != n_x && !(n_u == 0 && g_text.empty()))
      throw ConfigError("input_matrix must have state_dim rows");
    if (V.rows() != n_x) throw ConfigError("diffusion must have state_dim rows");
    if (!V.allFinite()) throw ConfigError("diffusion entries must be finite");
    s.f_text = std::move(f_text);
    s.g_text = std::move(g_text);
    if (s.g_text.empty()) s.g_text.assign(n_x, {});
    s.V = std::move(V);
    for (const auto& t : s.f_text) s.f.push_back(parse_checked(t, n_x));
    for (const auto& row : s.g_text) {
      if (static_cast<int>(row.size()) != n_u) throw ConfigError("input_matrix rows must have input_dim entries");
      std::vector<Expr> r;
      for (const auto& t : row) r.push_back(parse_checked(t, n_x));
      s.g.push_back(std::move(r));
    }
    return s;
  }

  static Expr parse_checked(const std::string& text, int dim) {
    try {
      return parse_expr(text, dim);
    } catch (const ParseError& e) {
      throw ConfigError("expression '" + text + "': " + e.what());
    }
  }

  Eigen::VectorXd drift(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(n_x);
    for (int i = 0; i < n_x; ++i) out(i) = eval_point(f[i], std::span<const double>(x.data(), x.size()));
    return out;
  }

  Eigen::MatrixXd input_matrix(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd out(n_x, n_u);
    for (int i = 0; i < n_x; ++i)
      for (int j = 0; j < n_u; ++j) out(i, j) = eval_point(g[i][j], std::span<const double>(x.data(), x.size()));
    return out;
  }

  // Drift plus input contribution f + g u.
  Eigen::VectorXd velocity(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd v = drift(x);
    if (n_u > 0) v += input_matrix(x) * u;
    return v;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["state_dim"] = n_x;
    j["input_dim"] = n_u;
    j["drift"] = f_text;
    j["input_matrix"] = g_text;
    std::vector<std::vector<double>> v(n_x, std::vector<double>(n_v));
    for (int i = 0; i < n_x; ++i)
      for (int k = 0; k < n_v; ++k) v[i][k] = V(i, k);
    j["diffusion"] = v;
    return j;
  }
};

enum class SafeForm { Function, SafeBox, UnsafeBox };

struct RegionSpec {
  Box X;
  Box X_I;
  SafeForm form = SafeForm::Function;
  std::string h_text;  // Function form
  Box box;             // SafeBox / UnsafeBox form
  Expr h;              // X_S = {h >= 0} in every form

  static RegionSpec build(Box X, Box X_I, SafeForm form, std::string h_text, Box box, std::uint64_t check_seed = 1) {
    RegionSpec r;
    r.X = std::move(X);
    r.X_I = std::move(X_I);
    r.form = form;
    r.h_text = std::move(h_text);
    r.box = std::move(box);
    const int n = static_cast<int>(r.X.size());
    if (static_cast<int>(r.X_I.size()) != n) throw ConfigError("initial_box dimension mismatch");
    for (int i = 0; i < n; ++i) {
      if (!(r.X[i].lo <= r.X[i].hi) || !std::isfinite(r.X[i].lo) || !std::isfinite(r.X[i].hi))
        throw ConfigError("state_box must be finite with lo <= hi");
      if (r.X_I[i].lo < r.X[i].lo || r.X_I[i].hi > r.X[i].hi || !(r.X_I[i].lo <= r.X_I[i].hi))
        throw ConfigError("initial_box must lie inside state_box");
    }
    switch (form) {
      case SafeForm::Function: r.h = StochasticAffineSystem::parse_checked(r.h_text, n); break;
      case SafeForm::SafeBox: {
        if (static_cast<int>(r.box.size()) != n) throw ConfigError("safe_box dimension mismatch");
        std::vector<Expr> faces;
        for (int i = 0; i < n; ++i) {
          faces.push_back(Expr::variable(i) - r.box[i].lo);
          faces.push_back(r.box[i].hi - Expr::variable(i));
        }
        r.h = faces[0];
        for (std::size_t k = 1; k < faces.size(); ++k) r.h = min(r.h, faces[k]);
        break;
      }
      case SafeForm::UnsafeBox: {
        if (static_cast<int>(r.box.size()) != n) throw ConfigError("unsafe_box dimension mismatch");
        std::vector<Expr> faces;
        for (int i = 0; i < n; ++i) {
          // Faces that coincide with the state box never separate anything.
          if (r.box[i].lo > r.X[i].lo) faces.push_back(r.box[i].lo - Expr::variable(i));
          if (r.box[i].hi < r.X[i].hi) faces.push_back(Expr::variable(i) - r.box[i].hi);
        }
        if (faces.empty()) throw ConfigError("unsafe_box covers the whole state box");
        r.h = faces[0];
        for (std::size_t k = 1; k < faces.size(); ++k) r.h = max(r.h, faces[k]);
        break;
      }
    }
    // X_I must be safe.
    std::mt19937_64 rng(check_seed);
    std::vector<double> x(n);
    for (int s = 0; s < 10000; ++s) {
      for (int i = 0; i < n; ++i) x[i] = std::uniform_real_distribution<double>(r.X_I[i].lo, r.X_I[i].hi)(rng);
      if (eval_point(r.h, x) < 0.0) throw ConfigError("initial_box is not contained in the safe set");
    }
    return r;
  }

  int dim() const { return static_cast<int>(X.size()); }

  double h_value(const Eigen::VectorXd& x) const { return eval_point(h, std::span<const double>(x.data(), x.size())); }
  bool in_initial(const Eigen::VectorXd& x) const {
    for (int i = 0; i < dim(); ++i)
      if (x(i) < X_I[i].lo || x(i) > X_I[i].hi) return false;
    return true;
  }
  bool in_state_box(const Eigen::VectorXd& x) const {
    for (int i = 0; i < dim(); ++i)
      if (x(i) < X[i].lo || x(i) > X[i].hi) return false;
    return true;
  }

  nlohmann::json to_json() const {
    auto boxj = [](const Box& b) {
      std::vector<std::vector<double>> v;
      for (const auto& iv : b) v.push_back({iv.lo, iv.hi});
      return v;
    };
    nlohmann::json j;
    j["state_box"] = boxj(X);
    j["initial_box"] = boxj(X_I);
    switch (form) {
      case SafeForm::Function: j["safe"] = {{"h", h_text}}; break;
      case SafeForm::SafeBox: j["safe"] = {{"safe_box", boxj(box)}}; break;
      case SafeForm::UnsafeBox: j["safe"] = {{"unsafe_box", boxj(box)}}; break;
    }
    return j;
  }
};

// h(x) < 0; the boundary h = 0 counts as safe.
inline bool in_unsafe(const RegionSpec& r, const Eigen::VectorXd& x) { return r.h_value(x) < 0.0; }

// Box-constrained or unconstrained control input.
struct InputSet {
  std::optional<Box> box;

  bool bounded() const { return box.has_value(); }
  bool contains_zero() const {
    if (!box) return true;
    for (const auto& iv : *box)
      if (!iv.contains(0.0)) return false;
    return true;
  }
  nlohmann::json to_json() const {
    if (!box) return nullptr;
    std::vector<std::vector<double>> v;
    for (const auto& iv : *box) v.push_back({iv.lo, iv.hi});
    return {{"box", v}};
  }
};

struct Benchmark {
  std::string name;
  StochasticAffineSystem system;
  RegionSpec regions;
  InputSet inputs;
  double alpha_gain = 1.0;
};

namespace detail {
inline Box box_of(std::initializer_list<std::pair<double, double>> l) {
  Box b;
  for (auto [lo, hi] : l) b.push_back({lo, hi});
  return b;
}
}  // namespace detail

inline constexpr double kGravity = 9.81;

inline Benchmark load_benchmark(const std::string& name, double unicycle_speed = 1.0) {
  constexpr double pi = detail::kPi;
  Benchmark b;
  b.name = name;
  if (name == "inverted_pendulum") {
    const double m = 1.0, l = 10.0;
    b.system = StochasticAffineSystem::build(
        2, 1, {"x2", format_number(kGravity / l) + "*sin(x1)"}, {{"0"}, {format_number(1.0 / (m * l * l))}},
        (Eigen::MatrixXd(2, 2) << 0.1, 0.0, 0.0, 0.1).finished());
    b.regions = RegionSpec::build(detail::box_of({{-pi / 4, pi / 4}, {-pi / 4, pi / 4}}),
                                  detail::box_of({{-pi / 15, pi / 15}, {-pi / 15, pi / 15}}), SafeForm::SafeBox, "",
                                  detail::box_of({{-pi / 6, pi / 6}, {-pi / 6, pi / 6}}));
  } else if (name == "darboux") {
    b.system = StochasticAffineSystem::build(2, 0, {"x2 + 2*x1*x2", "-x1 + 2*x1^2 - x2^2"}, {},
                                             (Eigen::MatrixXd(2, 2) << 0.1, 0.0, 0.0, 0.1).finished());
    b.regions = RegionSpec::build(detail::box_of({{-2, 2}, {-2, 2}}), detail::box_of({{0, 1}, {1, 2}}),
                                  SafeForm::Function, "x1 + x2^2", {});
  } else if (name == "unicycle") {
    const std::string v = format_number(unicycle_speed);
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(3, 3) * 0.1;
    b.system = StochasticAffineSystem::build(3, 1, {v + "*cos(x3)", v + "*sin(x3)", "0"}, {{"0"}, {"0"}, {"1"}}, V);
    b.regions = RegionSpec::build(detail::box_of({{-2, 2}, {-2, 2}, {-2, 2}}),
                                  detail::box_of({{-0.1, 0.1}, {-2, -1.8}, {-pi / 6, pi / 6}}), SafeForm::UnsafeBox,
                                  "", detail::box_of({{-0.2, 0.2}, {-0.2, 0.2}, {-2, 2}}));
  } else {
    throw ConfigError("unknown benchmark '" + name + "'");
  }
  return b;
}

}  // namespace sncbf
