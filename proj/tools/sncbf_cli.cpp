// sncbf: train, verify, enumerate, simulate and report on stochastic neural
// control barrier functions.
//
// Exit codes: 0 ok/valid, 1 falsified or not converged, 2 usage or config
// error, 3 unknown (verification budget exhausted or internal failure).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sncbf/config.hpp"
#include "sncbf/enumerate.hpp"
#include "sncbf/report.hpp"
#include "sncbf/sim.hpp"
#include "sncbf/train.hpp"
#include "sncbf/verify.hpp"

namespace fs = std::filesystem;
using namespace sncbf;

namespace {

enum Exit { kOk = 0, kFalsified = 1, kUsage = 2, kUnknown = 3 };

struct Options {
  std::string config;
  std::string model;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

struct Loaded {
  RunConfig cfg;
  nlohmann::json resolved;
  fs::path out;
};

Loaded load(const Options& o) {
  nlohmann::json doc = parse_json_text(read_text_file(o.config), o.config);
  nlohmann::json body = config_body(doc);
  if (!body.is_object()) throw ConfigError(o.config + ": expected an object");
  if (o.seed) body["seed"] = *o.seed;
  if (o.threads) body["threads"] = *o.threads;
  if (!o.out.empty()) body["output_dir"] = o.out;
  Loaded l;
  l.cfg = run_config_from_json(body);
  l.resolved = run_config_to_json(l.cfg);
  l.out = l.cfg.output_dir;
  return l;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string architecture(const Mlp& net) {
  std::string s;
  for (std::size_t i = 0; i < net.sizes().size(); ++i) s += (i ? "-" : "") + std::to_string(net.sizes()[i]);
  return s + " " + to_string(net.activation());
}

void write_outputs(const Loaded& l, const std::string& command, const Report& report,
                   const std::vector<std::string>& inputs = {}) {
  write_file(l.out / "report.txt", report.str());
  write_file(l.out / "manifest.json", make_manifest(command, l.resolved, l.cfg.seed, inputs).dump(2) + "\n");
}

void write_timing(const Loaded& l, int epochs, double synthesis, double verification) {
  nlohmann::json t = {{"epochs", epochs}, {"synthesis_seconds", synthesis}, {"verification_seconds", verification}};
  write_file(l.out / "timing.json", t.dump(2) + "\n");
}

void check_mode(const RunConfig& cfg, const Mlp& net) {
  if ((cfg.mode == Mode::Relu) != !net.smooth())
    throw ConfigError("model activation '" + to_string(net.activation()) + "' does not match mode '" +
                      to_string(cfg.mode) + "'");
}

void add_lower_bound_max(Report& r, const Mlp& net, const ReluArtifacts& art, const Box& X, const BnbConfig& bnb) {
  if (art.empty_superlevel) return;
  const double m = max_tilde_b(net, art.R, X, art.Q, bnb);
  r.add("lower_bound_max", m).add("lower_bound_superlevel_empty", m < 0.0);
}

int exit_for(VerifyStatus s) {
  switch (s) {
    case VerifyStatus::Valid: return kOk;
    case VerifyStatus::CounterexampleFound: return kFalsified;
    case VerifyStatus::Unknown: return kUnknown;
  }
  return kUnknown;
}

void add_outcome(Report& r, const VerificationOutcome& o) {
  r.add("status", to_string(o.status));
  r.add("violation", to_string(o.kind));
  if (o.status == VerifyStatus::CounterexampleFound) r.add("counterexample", o.counterexample);
  r.add("certified_bound", o.certified_bound);
  r.add("regions_checked", static_cast<long>(o.regions.size()));
}

int cmd_train_smooth(const Options& o) {
  Loaded l = load(o);
  const auto t0 = std::chrono::steady_clock::now();
  const SmoothTrainResult res = train_verifiable_smooth(l.cfg.smooth, l.cfg.benchmark);
  const double synth = seconds_since(t0);
  const double lmax = l.cfg.smooth.l_max();
  Report r;
  r.add("command", "train-smooth")
      .add("benchmark", l.cfg.benchmark_name)
      .add("architecture", architecture(res.net))
      .add("epochs", res.epochs)
      .add("converged", res.converged)
      .add("certified", res.certified)
      .add("psi", res.psi)
      .add("psi_star", res.psi_star)
      .add("L_max", lmax)
      .add("eps_bar", l.cfg.smooth.eps_bar)
      .add("validity_margin", lmax * l.cfg.smooth.eps_bar + res.psi_star)
      .add("valid", res.valid)
      .add("coverage", coverage_metric(res.net, l.cfg.benchmark.regions, l.cfg.coverage_grid));
  if (!res.diagnostics.empty()) r.add("diagnostics", res.diagnostics);
  write_file(l.out / "model.json", res.net.to_json().dump(2) + "\n");
  write_file(l.out / "history.csv", history_csv(res.history));
  write_outputs(l, "train-smooth", r);
  write_timing(l, res.epochs, synth, 0.0);
  std::cout << r.str();
  return res.valid ? kOk : kFalsified;
}

int cmd_train_vitl(const Options& o) {
  Loaded l = load(o);
  const auto t0 = std::chrono::steady_clock::now();
  const VitlResult res = train_vitl(l.cfg.vitl, l.cfg.benchmark);
  const double synth = seconds_since(t0);
  long correctness = 0, feasibility = 0;
  std::string ce_csv = "round,kind";
  for (int i = 0; i < l.cfg.benchmark.system.n_x; ++i) ce_csv += ",x" + std::to_string(i + 1);
  ce_csv += ",violation\n";
  for (const auto& c : res.counterexamples) {
    (c.kind == ViolationKind::Correctness ? correctness : feasibility) += 1;
    std::vector<std::string> cells{std::to_string(c.round), to_string(c.kind)};
    for (Eigen::Index i = 0; i < c.x.size(); ++i) cells.push_back(fmt6(c.x(i)));
    cells.push_back(fmt6(c.violation));
    ce_csv += csv_row(cells);
  }
  Report r;
  r.add("command", "train-vitl")
      .add("benchmark", l.cfg.benchmark_name)
      .add("architecture", architecture(res.net))
      .add("rounds", res.rounds)
      .add("epochs", res.epochs)
      .add("counterexamples", static_cast<long>(res.counterexamples.size()))
      .add("correctness_counterexamples", correctness)
      .add("feasibility_counterexamples", feasibility)
      .add("dataset_size", static_cast<long>(res.dataset.size()));
  add_outcome(r, res.outcome);
  if (!res.net.smooth()) {
    r.add("activation_regions", static_cast<long>(res.artifacts.Q.size()));
    add_lower_bound_max(r, res.net, res.artifacts, l.cfg.benchmark.regions.X, l.cfg.bnb);
  }
  r.add("coverage", coverage_metric(res.net, l.cfg.benchmark.regions, l.cfg.coverage_grid));
  write_file(l.out / "model.json", res.net.to_json().dump(2) + "\n");
  write_file(l.out / "history.csv", history_csv(res.history));
  write_file(l.out / "counterexamples.csv", ce_csv);
  write_outputs(l, "train-vitl", r);
  write_timing(l, res.epochs, synth, res.verify_seconds);
  std::cout << r.str();
  return exit_for(res.outcome.status);
}

int cmd_verify(const Options& o) {
  Loaded l = load(o);
  const Mlp net = load_model(o.model);
  check_mode(l.cfg, net);
  const Benchmark& bm = l.cfg.benchmark;
  Report r;
  r.add("command", "verify").add("benchmark", l.cfg.benchmark_name).add("architecture", architecture(net));
  VerificationOutcome out;
  if (net.smooth()) {
    out = verify_smooth(net, bm.system, bm.regions, bm.alpha_gain, bm.inputs, l.cfg.bnb);
  } else {
    net.require_single_hidden("relu verification");
    const ReluArtifacts art = relu_artifacts(net, bm.regions, l.cfg.seed);
    out = verify_relu(net, bm.system, bm.regions, bm.alpha_gain, bm.inputs, art, l.cfg.bnb);
    r.add("activation_regions", static_cast<long>(art.Q.size())).add("empty_superlevel_set", art.empty_superlevel);
    if (!art.empty_superlevel) r.add("neuron_bounds", art.R.R);
    add_lower_bound_max(r, net, art, bm.regions.X, l.cfg.bnb);
  }
  add_outcome(r, out);
  write_outputs(l, "verify", r, {o.model});
  std::cout << r.str();
  return exit_for(out.status);
}

int cmd_enumerate(const Options& o) {
  Loaded l = load(o);
  const Mlp net = load_model(o.model);
  check_mode(l.cfg, net);
  if (net.smooth()) throw ConfigError("enumerate needs a ReLU model");
  net.require_single_hidden("enumerate");
  const ReluArtifacts art = relu_artifacts(net, l.cfg.benchmark.regions, l.cfg.seed);
  std::string csv = "index,active_count,pattern\n";
  for (std::size_t i = 0; i < art.Q.size(); ++i)
    csv += csv_row({std::to_string(i), std::to_string(art.Q[i].count()), art.Q[i].str()});
  Report r;
  r.add("command", "enumerate")
      .add("architecture", architecture(net))
      .add("empty_superlevel_set", art.empty_superlevel)
      .add("activation_regions", static_cast<long>(art.Q.size()));
  if (!art.empty_superlevel) r.add("neuron_bounds", art.R.R);
  write_file(l.out / "regions.csv", csv);
  write_outputs(l, "enumerate", r, {o.model});
  std::cout << r.str();
  return kOk;
}

int cmd_simulate(const Options& o) {
  Loaded l = load(o);
  const Mlp net = load_model(o.model);
  check_mode(l.cfg, net);
  const Benchmark& bm = l.cfg.benchmark;
  SimConfig sc = l.cfg.sim;
  if (!sc.x0) {
    Eigen::VectorXd c(bm.regions.dim());
    for (int i = 0; i < bm.regions.dim(); ++i) c(i) = bm.regions.X_I[i].mid();
    sc.x0 = c;
  }
  std::optional<ReluArtifacts> art;
  if (!net.smooth()) {
    net.require_single_hidden("relu simulation");
    art = relu_artifacts(net, bm.regions, l.cfg.seed);
  }
  const BarrierView view{net, art ? &art->R : nullptr};
  const SafetyEstimate est = estimate_safety_probability(view, bm.system, bm.regions, bm.inputs, bm.alpha_gain, sc);
  // Outside the certified set the only guarantee is the trivial one.
  SafetyBound bound;
  const double b0 = art ? tilde_b(net, art->R, *sc.x0) : net.forward(*sc.x0);
  const bool trivial = !(b0 > 0.0) || !inside(bm.regions.X, *sc.x0) || net.forward(*sc.x0) < 0.0;
  if (trivial) {
    bound.b0 = b0;
    bound.c = std::numeric_limits<double>::quiet_NaN();
  } else {
    bound = art ? worst_case_bound_relu(net, art->R, bm.regions.X, art->Q, *sc.x0, sc.horizon, l.cfg.bnb)
                : worst_case_bound_smooth(net, bm.regions.X, *sc.x0, sc.horizon, l.cfg.seed);
  }

  std::string csv = "trial,t";
  for (int i = 0; i < bm.system.n_x; ++i) csv += ",x" + std::to_string(i + 1);
  for (int i = 0; i < bm.system.n_u; ++i) csv += ",u" + std::to_string(i + 1);
  csv += art ? ",B,B_tilde\n" : ",B\n";
  for (int trial = 0; trial < std::min(l.cfg.record_traces, sc.trials); ++trial) {
    std::mt19937_64 rng = trial_rng(sc.seed, static_cast<std::uint64_t>(trial));
    const Trace tr = simulate(view, bm.system, bm.regions, bm.inputs, bm.alpha_gain, sc, *sc.x0, rng);
    for (std::size_t s = 0; s < tr.times.size(); ++s) {
      std::vector<std::string> cells{std::to_string(trial), fmt6(tr.times[s])};
      for (Eigen::Index i = 0; i < tr.states[s].size(); ++i) cells.push_back(fmt6(tr.states[s](i)));
      for (Eigen::Index i = 0; i < tr.controls[s].size(); ++i) cells.push_back(fmt6(tr.controls[s](i)));
      cells.push_back(fmt6(tr.B[s]));
      if (art) cells.push_back(fmt6(tr.B_tilde[s]));
      csv += csv_row(cells);
    }
  }
  Report r;
  r.add("command", "simulate")
      .add("architecture", architecture(net))
      .add("x0", *sc.x0)
      .add("dt", sc.dt)
      .add("horizon", sc.horizon)
      .add("trials", est.trials)
      .add("survived", est.survived)
      .add("p_hat", est.p_hat)
      .add("wilson_lower", est.wilson.lo)
      .add("wilson_upper", est.wilson.hi)
      .add("infeasible_trials", est.infeasible_trials)
      .add("aborted_trials", est.aborted_trials)
      .add("bound", bound.bound)
      .add("bound_trivial", trivial)
      .add("barrier_at_x0", bound.b0)
      .add("supremum", bound.c)
      .add("supremum_estimated", bound.estimated)
      .add("p_hat_at_least_bound", est.p_hat >= bound.bound);
  write_file(l.out / "traces.csv", csv);
  write_outputs(l, "simulate", r, {o.model});
  std::cout << r.str();
  return est.p_hat >= bound.bound ? kOk : kFalsified;
}

int cmd_report(const Options& o) {
  Loaded l = load(o);
  const Mlp net = load_model(o.model);
  const double cov = coverage_metric(net, l.cfg.benchmark.regions, l.cfg.coverage_grid);
  std::string epochs = "n/a", verif = "n/a", synth = "n/a";
  const fs::path timing = fs::path(o.model).parent_path() / "timing.json";
  if (fs::exists(timing)) {
    const nlohmann::json t = parse_json_text(read_text_file(timing.string()), timing.string());
    epochs = std::to_string(t.value("epochs", 0));
    verif = fmt6(t.value("verification_seconds", 0.0));
    synth = fmt6(t.value("synthesis_seconds", 0.0));
  }
  char pct[32];
  std::snprintf(pct, sizeof pct, "%.1f%%", 100.0 * cov);
  std::string table = "| benchmark | architecture | epochs | coverage | verification time (s) | synthesis time (s) |\n";
  table += "|---|---|---|---|---|---|\n";
  table += "| " + l.cfg.benchmark_name + " | " + architecture(net) + " | " + epochs + " | " + pct + " | " + verif +
           " | " + synth + " |\n";
  write_file(l.out / "table.md", table);
  Report r;
  r.add("command", "report").add("architecture", architecture(net)).add("coverage", cov).add("coverage_percent", pct);
  write_outputs(l, "report", r, {o.model});
  std::cout << table;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic neural control barrier functions: synthesis, verification and simulation"};
  app.require_subcommand(1);
  Options o;
  struct Command {
    const char* name;
    const char* help;
    bool needs_model;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"train-smooth", "Sampled training with Lipschitz certificates", false, cmd_train_smooth},
      {"train-vitl", "Training with verification in the loop", false, cmd_train_vitl},
      {"verify", "Verify a stored model", true, cmd_verify},
      {"enumerate", "Enumerate activation regions of a ReLU model", true, cmd_enumerate},
      {"simulate", "Monte Carlo simulation under the safety filter", true, cmd_simulate},
      {"report", "Coverage table for a stored model", true, cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    CLI::App* s = app.add_subcommand(c.name, c.help);
    s->add_option("--config", o.config, "Run config (JSON) or a run manifest")->required()->envname("SNCBF_CONFIG");
    auto* m = s->add_option("--model", o.model, "Model file")->envname("SNCBF_MODEL");
    if (c.needs_model) m->required();
    s->add_option("--out", o.out, "Output directory (overrides output_dir)")->envname("SNCBF_OUT");
    s->add_option("--seed", o.seed, "Seed (overrides seed)")->envname("SNCBF_SEED");
    s->add_option("--threads", o.threads, "Worker thread cap")->check(CLI::PositiveNumber)->envname("SNCBF_THREADS");
    subs.emplace_back(s, &c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  for (auto& [s, c] : subs) {
    if (!s->parsed()) continue;
    try {
      return c->run(o);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kUnknown;
    }
  }
  return kUsage;
}
