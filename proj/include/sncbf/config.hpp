#pragma once

// Run configuration: a JSON document naming a benchmark preset (or an inline
// system) plus per-module settings. Unknown keys are rejected; every field
// has a default, and the resolved document is what run manifests record.

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sncbf/bnb.hpp"
#include "sncbf/error.hpp"
#include "sncbf/sim.hpp"
#include "sncbf/system.hpp"
#include "sncbf/train.hpp"

namespace sncbf {

using nlohmann::json;

enum class Mode { Smooth, Relu };

inline std::string to_string(Mode m) { return m == Mode::Smooth ? "smooth" : "relu"; }

struct RunConfig {
  std::string benchmark_name;       // preset name, or "inline"
  std::optional<json> inline_spec;  // set for inline systems
  double unicycle_speed = 1.0;
  Benchmark benchmark;
  Mode mode = Mode::Smooth;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 1;
  SmoothTrainConfig smooth;
  VitlConfig vitl;
  BnbConfig bnb;
  SimConfig sim;
  int record_traces = 1;
  int coverage_grid = 200;
};

namespace detail {

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

template <class T>
T read_as(const json& j, const std::string& path) {
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!j.is_number()) throw ConfigError(path + ": expected a number");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError(path + ": expected an integer");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ConfigError(path + ": expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ConfigError(path + ": expected a string");
    }
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// Reads the members of one JSON object, remembering which keys were used.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void field(const std::string& key, T& out) {
    if (const json* v = find(key)) out = parse<T>(*v, join_path(path_, key));
  }

  void field(const std::string& key, Activation& out) {
    if (const json* v = find(key)) {
      try {
        out = activation_from_string(read_as<std::string>(*v, join_path(path_, key)));
      } catch (const ConfigError& e) {
        throw ConfigError(join_path(path_, key) + ": " + e.what());
      }
    }
  }

  void field(const std::string& key, SafeHinge& out) {
    if (const json* v = find(key)) {
      try {
        out = safe_hinge_from_string(read_as<std::string>(*v, join_path(path_, key)));
      } catch (const ConfigError& e) {
        throw ConfigError(join_path(path_, key) + ": " + e.what());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + join_path(path_, it.key()) + "'");
  }

  const std::string& path() const { return path_; }

 private:
  template <class T>
  static T parse(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw ConfigError(path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(read_as<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    } else if constexpr (std::is_same_v<T, std::array<double, 3>>) {
      if (!v.is_array() || v.size() != 3) throw ConfigError(path + ": expected an array of 3 numbers");
      return {read_as<double>(v[0], path), read_as<double>(v[1], path), read_as<double>(v[2], path)};
    } else {
      return read_as<T>(v, path);
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Field lists shared by reading and writing.
template <class F>
void visit(SmoothTrainConfig& c, F&& f) {
  f("hidden", c.hidden);
  f("activation", c.activation);
  f("eps_bar", c.eps_bar);
  f("L_h", c.L_h);
  f("L_dh", c.L_dh);
  f("L_d2h", c.L_d2h);
  f("L_x", c.L_x);
  f("delta", c.delta);
  f("barrier_coefficients", c.barrier);
  f("lr", c.lr);
  f("lr_barrier", c.lr_barrier);
  f("lr_omega", c.lr_omega);
  f("lr_psi", c.lr_psi);
  f("psi0", c.psi0);
  f("max_epochs", c.max_epochs);
  f("ridge_slope", c.ridge_slope);
  f("ridge_offset", c.ridge_offset);
  f("output_scale", c.output_scale);
}

template <class F>
void visit(VitlConfig& c, F&& f) {
  f("hidden", c.hidden);
  f("activation", c.activation);
  f("lambda_f", c.lambda_f);
  f("lambda_c", c.lambda_c);
  f("eps", c.eps);
  f("penalty", c.penalty);
  f("feasibility_margin", c.feasibility_margin);
  f("lr", c.lr);
  f("max_rounds", c.max_rounds);
  f("epochs_per_round", c.epochs_per_round);
  f("batch_size", c.batch_size);
  f("eps_bar", c.eps_bar);
  f("jitter_copies", c.jitter_copies);
  f("safe_hinge", c.safe_hinge);
}

template <class F>
void visit(BnbConfig& c, F&& f) {
  f("delta", c.delta);
  f("eps_eq", c.eps_eq);
  f("max_boxes", c.max_boxes);
  f("min_width", c.min_width);
}

template <class F>
void visit(SimConfig& c, F&& f) {
  f("dt", c.dt);
  f("horizon", c.horizon);
  f("trials", c.trials);
}

template <class T>
void read_section(ObjectReader& top, const std::string& key, T& cfg) {
  if (const json* s = top.find(key)) {
    ObjectReader r(*s, key);
    visit(cfg, [&](const char* name, auto& field) { r.field(name, field); });
    r.finish();
  }
}

template <class T>
json write_section(T cfg) {
  json j = json::object();
  visit(cfg, [&](const char* name, auto& field) {
    using F = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<F, Activation> || std::is_same_v<F, SafeHinge>)
      j[name] = to_string(field);
    else
      j[name] = field;
  });
  return j;
}

inline Box read_box(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of [lo, hi] pairs");
  Box b;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) throw ConfigError(p + ": expected [lo, hi]");
    const double lo = read_as<double>(j[i][0], p), hi = read_as<double>(j[i][1], p);
    if (!(lo <= hi)) throw ConfigError(p + ": lo must not exceed hi");
    b.push_back({lo, hi});
  }
  return b;
}

inline Eigen::VectorXd read_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = read_as<double>(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline StochasticAffineSystem system_from_json(const json& j, const std::string& path = "system") {
  detail::ObjectReader r(j, path);
  int n_x = 0, n_u = 0;
  r.field("state_dim", n_x);
  r.field("input_dim", n_u);
  if (n_x < 1) throw ConfigError(path + ".state_dim: must be at least 1");
  if (n_u < 0) throw ConfigError(path + ".input_dim: must be non-negative");
  std::vector<std::string> drift;
  std::vector<std::vector<std::string>> g;
  const json* d = r.find("drift");
  if (!d || !d->is_array()) throw ConfigError(path + ".drift: expected an array of expressions");
  for (std::size_t i = 0; i < d->size(); ++i)
    drift.push_back(detail::read_as<std::string>((*d)[i], path + ".drift[" + std::to_string(i) + "]"));
  if (const json* gj = r.find("input_matrix")) {
    if (!gj->is_array()) throw ConfigError(path + ".input_matrix: expected an array of rows");
    for (std::size_t i = 0; i < gj->size(); ++i) {
      const std::string p = path + ".input_matrix[" + std::to_string(i) + "]";
      if (!(*gj)[i].is_array()) throw ConfigError(p + ": expected an array of expressions");
      std::vector<std::string> row;
      for (std::size_t k = 0; k < (*gj)[i].size(); ++k) row.push_back(detail::read_as<std::string>((*gj)[i][k], p));
      g.push_back(std::move(row));
    }
  }
  const json* vj = r.find("diffusion");
  if (!vj || !vj->is_array() || vj->empty()) throw ConfigError(path + ".diffusion: expected a matrix");
  const std::size_t cols = (*vj)[0].is_array() ? (*vj)[0].size() : 0;
  Eigen::MatrixXd V(static_cast<Eigen::Index>(vj->size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < vj->size(); ++i) {
    const std::string p = path + ".diffusion[" + std::to_string(i) + "]";
    if (!(*vj)[i].is_array() || (*vj)[i].size() != cols) throw ConfigError(p + ": rows must have equal length");
    for (std::size_t k = 0; k < cols; ++k)
      V(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = detail::read_as<double>((*vj)[i][k], p);
  }
  r.finish();
  try {
    return StochasticAffineSystem::build(n_x, n_u, std::move(drift), std::move(g), std::move(V));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline RegionSpec regions_from_json(const json& j, const std::string& path = "regions") {
  detail::ObjectReader r(j, path);
  const json* X = r.find("state_box");
  const json* XI = r.find("initial_box");
  const json* safe = r.find("safe");
  if (!X || !XI || !safe) throw ConfigError(path + ": state_box, initial_box and safe are required");
  detail::ObjectReader s(*safe, path + ".safe");
  const json* h = s.find("h");
  const json* sb = s.find("safe_box");
  const json* ub = s.find("unsafe_box");
  s.finish();
  if ((h != nullptr) + (sb != nullptr) + (ub != nullptr) != 1)
    throw ConfigError(path + ".safe: give exactly one of h, safe_box, unsafe_box");
  r.finish();
  const Box bx = detail::read_box(*X, path + ".state_box"), bi = detail::read_box(*XI, path + ".initial_box");
  try {
    if (h) return RegionSpec::build(bx, bi, SafeForm::Function, detail::read_as<std::string>(*h, path + ".safe.h"), {});
    if (sb) return RegionSpec::build(bx, bi, SafeForm::SafeBox, "", detail::read_box(*sb, path + ".safe.safe_box"));
    return RegionSpec::build(bx, bi, SafeForm::UnsafeBox, "", detail::read_box(*ub, path + ".safe.unsafe_box"));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline InputSet inputs_from_json(const json& j, const std::string& path = "inputs") {
  if (j.is_null()) return {};
  detail::ObjectReader r(j, path);
  InputSet U;
  if (const json* b = r.find("box")) U.box = detail::read_box(*b, path + ".box");
  r.finish();
  return U;
}

inline json benchmark_to_json(const Benchmark& b) {
  return {{"name", b.name},
          {"system", b.system.to_json()},
          {"regions", b.regions.to_json()},
          {"inputs", b.inputs.to_json()},
          {"alpha_gain", b.alpha_gain}};
}

inline Benchmark benchmark_from_json(const json& j, const std::string& path = "benchmark") {
  detail::ObjectReader r(j, path);
  Benchmark b;
  b.name = "inline";
  r.field("name", b.name);
  const json* s = r.find("system");
  const json* g = r.find("regions");
  if (!s || !g) throw ConfigError(path + ": system and regions are required");
  b.system = system_from_json(*s, path + ".system");
  b.regions = regions_from_json(*g, path + ".regions");
  if (const json* u = r.find("inputs")) b.inputs = inputs_from_json(*u, path + ".inputs");
  r.field("alpha_gain", b.alpha_gain);
  r.finish();
  if (b.regions.dim() != b.system.n_x) throw ConfigError(path + ": region dimension differs from state_dim");
  if (b.inputs.box && static_cast<int>(b.inputs.box->size()) != b.system.n_u)
    throw ConfigError(path + ".inputs.box: needs input_dim intervals");
  if (!(b.alpha_gain > 0.0)) throw ConfigError(path + ".alpha_gain: must be positive");
  return b;
}

// A run manifest may be passed wherever a config is expected.
inline const json& config_body(const json& j) {
  if (j.is_object() && j.contains("manifest_version")) {
    if (!j.contains("config")) throw ConfigError("manifest has no config");
    return j.at("config");
  }
  return j;
}

inline RunConfig run_config_from_json(const json& doc) {
  const json& j = config_body(doc);
  detail::ObjectReader r(j, "");
  RunConfig c;
  const json* b = r.find("benchmark");
  if (!b) throw ConfigError("benchmark: required (preset name or inline object)");
  r.field("unicycle_speed", c.unicycle_speed);
  if (b->is_string()) {
    c.benchmark_name = b->get<std::string>();
    c.benchmark = load_benchmark(c.benchmark_name, c.unicycle_speed);
  } else {
    c.inline_spec = *b;
    c.benchmark = benchmark_from_json(*b);
    c.benchmark_name = c.benchmark.name;
  }
  if (const json* m = r.find("mode")) {
    const std::string s = detail::read_as<std::string>(*m, "mode");
    if (s == "smooth")
      c.mode = Mode::Smooth;
    else if (s == "relu")
      c.mode = Mode::Relu;
    else
      throw ConfigError("mode: expected \"smooth\" or \"relu\"");
  }
  if (c.mode == Mode::Smooth) c.vitl.activation = Activation::Softplus;
  r.field("seed", c.seed);
  r.field("output_dir", c.output_dir);
  r.field("threads", c.threads);
  detail::read_section(r, "train_smooth", c.smooth);
  detail::read_section(r, "train_vitl", c.vitl);
  detail::read_section(r, "verify", c.bnb);
  if (const json* s = r.find("sim")) {
    detail::ObjectReader sr(*s, "sim");
    detail::visit(c.sim, [&](const char* name, auto& field) { sr.field(name, field); });
    if (const json* x0 = sr.find("x0"); x0 && !x0->is_null()) c.sim.x0 = detail::read_vector(*x0, "sim.x0");
    if (const json* u = sr.find("u_ref")) c.sim.u_ref = detail::read_vector(*u, "sim.u_ref");
    sr.field("record_traces", c.record_traces);
    sr.finish();
  }
  if (const json* rep = r.find("report")) {
    detail::ObjectReader rr(*rep, "report");
    rr.field("coverage_grid", c.coverage_grid);
    rr.finish();
  }
  r.finish();

  const int n = c.benchmark.system.n_x;
  if (c.threads < 1) throw ConfigError("threads: must be at least 1");
  if (c.smooth.hidden < 1) throw ConfigError("train_smooth.hidden: must be at least 1");
  if (c.smooth.activation == Activation::Relu) throw ConfigError("train_smooth.activation: must be smooth");
  if (!(c.smooth.eps_bar > 0.0)) throw ConfigError("train_smooth.eps_bar: must be positive");
  if (c.smooth.max_epochs < 0) throw ConfigError("train_smooth.max_epochs: must be non-negative");
  if (c.vitl.hidden.empty()) throw ConfigError("train_vitl.hidden: needs at least one layer");
  for (int h : c.vitl.hidden)
    if (h < 1) throw ConfigError("train_vitl.hidden: widths must be positive");
  if (c.vitl.lambda_f < 0.0 || c.vitl.lambda_c < 0.0) throw ConfigError("train_vitl: loss weights must be non-negative");
  if (c.vitl.max_rounds < 0 || c.vitl.epochs_per_round < 0 || c.vitl.batch_size < 0 || c.vitl.jitter_copies < 0)
    throw ConfigError("train_vitl: counts must be non-negative");
  if (!(c.vitl.eps_bar > 0.0)) throw ConfigError("train_vitl.eps_bar: must be positive");
  if ((c.mode == Mode::Relu) != (c.vitl.activation == Activation::Relu))
    throw ConfigError("train_vitl.activation: does not match mode");
  if (!(c.bnb.delta > 0.0) || c.bnb.max_boxes < 1 || !(c.bnb.min_width > 0.0))
    throw ConfigError("verify: delta, max_boxes and min_width must be positive");
  if (c.sim.x0 && c.sim.x0->size() != n) throw ConfigError("sim.x0: needs state_dim entries");
  if (c.sim.u_ref.size() && c.sim.u_ref.size() != c.benchmark.system.n_u)
    throw ConfigError("sim.u_ref: needs input_dim entries");
  if (c.record_traces < 0) throw ConfigError("sim.record_traces: must be non-negative");
  if (c.coverage_grid < 50) throw ConfigError("report.coverage_grid: must be at least 50");
  c.sim.validate();
  c.sim.seed = c.seed;
  c.sim.threads = c.threads;
  c.smooth.seed = c.seed;
  c.vitl.seed = c.seed;
  c.vitl.bnb = c.bnb;
  return c;
}

// The fully resolved document; reading it back gives the same RunConfig.
inline json run_config_to_json(const RunConfig& c) {
  json j;
  if (c.inline_spec)
    j["benchmark"] = benchmark_to_json(c.benchmark);
  else
    j["benchmark"] = c.benchmark_name;
  j["unicycle_speed"] = c.unicycle_speed;
  j["mode"] = to_string(c.mode);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["train_smooth"] = detail::write_section(c.smooth);
  j["train_vitl"] = detail::write_section(c.vitl);
  j["verify"] = detail::write_section(c.bnb);
  json s = detail::write_section(c.sim);
  s["x0"] = c.sim.x0 ? json(detail::to_vector(*c.sim.x0)) : json(nullptr);
  s["u_ref"] = detail::to_vector(c.sim.u_ref);
  s["record_traces"] = c.record_traces;
  j["sim"] = s;
  j["report"] = {{"coverage_grid", c.coverage_grid}};
  return j;
}

// Parse errors carry nlohmann's "line L, column C" position.
inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(parse_json_text(read_text_file(path), path));
}

inline Mlp load_model(const std::string& path) { return Mlp::from_json(parse_json_text(read_text_file(path), path)); }

}  // namespace sncbf
