#include <gtest/gtest.h>

#include <random>

#include "sncbf/verify.hpp"

using namespace sncbf;

namespace {

const Box kSquare{{-1.0, 1.0}, {-1.0, 1.0}};

Mlp constant_net(Activation a, double value) {
  Mlp m({2, 1, 1}, a);
  m.bias(1)(0) = value;
  return m;
}

// B = s(w . x + r1) + r2 with a single hidden neuron.
Mlp one_neuron(Activation a, double w1, double w2, double r1, double r2) {
  Mlp m({2, 1, 1}, a);
  m.weight(0)(0, 0) = w1;
  m.weight(0)(0, 1) = w2;
  m.bias(0)(0) = r1;
  m.weight(1)(0, 0) = 1.0;
  m.bias(1)(0) = r2;
  return m;
}

RegionSpec half_plane(double offset) {
  return RegionSpec::build(kSquare, Box{{0.9, 1.0}, {-1.0, 1.0}}, SafeForm::Function, "x1 - " + format_number(offset), {});
}

StochasticAffineSystem oscillator(double V) {
  return StochasticAffineSystem::build(2, 1, {"x2", "-x1 + 0.5*x2"}, {{"0"}, {"1"}},
                                       Eigen::MatrixXd::Identity(2, 2) * V);
}

const StochasticAffineSystem kNoInput =
    StochasticAffineSystem::build(2, 0, {"0", "0"}, {}, Eigen::MatrixXd::Zero(2, 2));

// Grid scan for h < 0 with B >= 0.
double worst_h_on_grid(const Mlp& net, const RegionSpec& r, int n) {
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Eigen::Vector2d x(-1.0 + 2.0 * i / (n - 1), -1.0 + 2.0 * j / (n - 1));
      if (net.forward(x) >= 0.0) worst = std::min(worst, r.h_value(x));
    }
  return worst;
}

// Largest violation of  exists u in U: lambda u + xi >= 0  on a grid of B >= 0,
// using a 1-D search over u.
double worst_feasibility_on_grid(const Mlp& net, const StochasticAffineSystem& sys, double k, double umax, int n) {
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      Eigen::Vector2d x(-1.0 + 2.0 * i / (n - 1), -1.0 + 2.0 * j / (n - 1));
      if (net.forward(x) < 0.0) continue;
      const GeneratorTerms t = lambda_xi_smooth(net, sys, k, x);
      double best = -std::numeric_limits<double>::infinity();
      for (int s = 0; s <= 200; ++s) best = std::max(best, t.value(Eigen::VectorXd::Constant(1, -umax + 2.0 * umax * s / 200)));
      worst = std::min(worst, best);
    }
  return worst;
}

}  // namespace

TEST(VerifySmooth, EmptySuperLevelSetIsValid) {
  VerificationOutcome o = verify_correctness_smooth(constant_net(Activation::Softplus, -1.0), half_plane(0.0), {});
  EXPECT_EQ(o.status, VerifyStatus::Valid);
}

TEST(VerifySmooth, WholeBoxIsCounterexample) {
  VerificationOutcome o = verify_correctness_smooth(constant_net(Activation::Tanh, 1.0), half_plane(0.0), {});
  ASSERT_EQ(o.status, VerifyStatus::CounterexampleFound);
  EXPECT_EQ(o.kind, ViolationKind::Correctness);
  EXPECT_LT(o.counterexample(0), 0.0);
}

TEST(VerifySmooth, NoInputConstantBarrier) {
  Benchmark d = load_benchmark("darboux");
  VerificationOutcome o = verify_feasibility_smooth(constant_net(Activation::Softplus, 1.0), d.system, 1.0, {}, d.regions.X, {});
  EXPECT_EQ(o.status, VerifyStatus::Valid);
  EXPECT_EQ(o.regions.at(0).level, "16");
}

TEST(VerifySmooth, PendulumGradientNeverVanishes) {
  Benchmark p = load_benchmark("inverted_pendulum");
  ASSERT_FALSE(p.inputs.bounded());
  Mlp m = one_neuron(Activation::Softplus, 0.0, 1.0, 0.0, 0.0);
  VerificationOutcome o = verify_feasibility_smooth(m, p.system, 1.0, p.inputs, p.regions.X, {});
  EXPECT_EQ(o.status, VerifyStatus::Valid);
  EXPECT_EQ(o.regions.at(0).level, "cor1");
}

TEST(VerifySmooth, InjectedBiasFlipsVerdict) {
  Mlp m = one_neuron(Activation::Softplus, 1.0, 0.0, 0.0, -scalar::softplus(0.2));
  RegionSpec r = half_plane(0.0);
  EXPECT_GE(worst_h_on_grid(m, r, 401), 0.0);
  EXPECT_EQ(verify_correctness_smooth(m, r, {}).status, VerifyStatus::Valid);
  m.bias(1)(0) += 0.3;
  EXPECT_LT(worst_h_on_grid(m, r, 401), 0.0);
  VerificationOutcome o = verify(m, oscillator(0.1), r, 1.0, {}, {});
  ASSERT_EQ(o.status, VerifyStatus::CounterexampleFound);
  EXPECT_EQ(o.kind, ViolationKind::Correctness);
  EXPECT_GE(m.forward(o.counterexample), 0.0);
  EXPECT_LT(r.h_value(o.counterexample), 0.0);
}

TEST(VerifySmooth, FeasibilityAgreesWithGridOracle) {
  const double umax = 10.0;
  InputSet U{Box{{-umax, umax}}};
  int decided = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (Activation a : {Activation::Softplus, Activation::Tanh}) {
      Mlp m = Mlp::random({2, 3, 1}, a, seed);
      m.bias(1)(0) += 0.2 - m.forward(Eigen::Vector2d::Zero());
      const auto sys = oscillator(0.2);
      VerificationOutcome o = verify_feasibility_smooth(m, sys, 1.0, U, kSquare, {});
      const double oracle = worst_feasibility_on_grid(m, sys, 1.0, umax, 301);
      if (o.status == VerifyStatus::Valid) {
        ++decided;
        EXPECT_GE(oracle, -1e-4 * (1 + umax)) << seed;
      } else if (o.status == VerifyStatus::CounterexampleFound) {
        ++decided;
        const GeneratorTerms t = lambda_xi_smooth(m, sys, 1.0, o.counterexample);
        EXPECT_GE(m.forward(o.counterexample), 0.0);
        EXPECT_LT(t.xi + umax * t.lambda.cwiseAbs().sum(), 0.0);
      }
    }
  }
  EXPECT_GE(decided, 10);
}

TEST(VerifyRelu, OneNeuronCorrectness) {
  Mlp m = one_neuron(Activation::Relu, 1.0, 0.0, 0.0, -0.5);
  const std::vector<ActivationSet> Q{ActivationSet::from_string("1")};
  EXPECT_EQ(verify_correctness_relu(m, half_plane(0.0), Q, {}).status, VerifyStatus::Valid);
  VerificationOutcome o = verify_correctness_relu(m, half_plane(0.75), Q, {});
  ASSERT_EQ(o.status, VerifyStatus::CounterexampleFound);
  EXPECT_GE(o.counterexample(0), 0.5);
  EXPECT_LT(o.counterexample(0), 0.75);
}

TEST(VerifyRelu, NonlinearSafeSetUsesBranchAndBound) {
  Mlp m = one_neuron(Activation::Relu, 1.0, 0.0, 0.0, -0.5);
  RegionSpec r = RegionSpec::build(kSquare, Box{{0.9, 1.0}, {-0.1, 0.1}}, SafeForm::Function, "x1 - x2^2", {});
  const std::vector<ActivationSet> Q{ActivationSet::from_string("1")};
  VerificationOutcome o = verify_correctness_relu(m, r, Q, {});
  ASSERT_EQ(o.status, VerifyStatus::CounterexampleFound);
  EXPECT_GE(m.forward(o.counterexample), 0.0);
  EXPECT_LT(r.h_value(o.counterexample), 0.0);
  RegionSpec r2 = RegionSpec::build(kSquare, Box{{0.9, 1.0}, {-0.1, 0.1}}, SafeForm::Function, "x1 + x2^2", {});
  EXPECT_EQ(verify_correctness_relu(m, r2, Q, {}).status, VerifyStatus::Valid);
}

TEST(VerifyRelu, NoInputPassesAtFirstLevel) {
  Mlp m = one_neuron(Activation::Relu, 1.0, 0.0, 0.0, 0.5);
  ReluArtifacts art = relu_artifacts(m, half_plane(-0.5), 1);
  VerificationOutcome o = verify_feasibility_relu(m, art.R, kNoInput, 1.0, {}, kSquare, art.Q, {});
  EXPECT_EQ(o.status, VerifyStatus::Valid);
  ASSERT_FALSE(o.regions.empty());
  for (const auto& r : o.regions) EXPECT_EQ(r.level, "22");
  EXPECT_LE(o.regions.front().boxes, 3);
}

TEST(VerifyRelu, ViolatingRegionFoundAtExactLevel) {
  // B = 0.5 - |x1| under drift pushing x1 to the right; input acts on x2 only
  Mlp m({2, 2, 1}, Activation::Relu);
  m.weight(0)(0, 0) = 1.0;
  m.weight(0)(1, 0) = -1.0;
  m.weight(1)(0, 0) = -1.0;
  m.weight(1)(0, 1) = -1.0;
  m.bias(1)(0) = 0.5;
  const auto sys = StochasticAffineSystem::build(2, 1, {"1", "0"}, {{"0"}, {"1"}}, Eigen::MatrixXd::Identity(2, 2) * 0.1);
  const InputSet U{Box{{-10.0, 10.0}}};
  RegionSpec r = RegionSpec::build(kSquare, Box{{-0.1, 0.1}, {-1.0, 1.0}}, SafeForm::Function, "1", {});
  ReluArtifacts art = relu_artifacts(m, r, 1);
  VerificationOutcome o = verify_feasibility_relu(m, art.R, sys, 1.0, U, kSquare, art.Q, {});
  ASSERT_EQ(o.status, VerifyStatus::CounterexampleFound);
  EXPECT_EQ(o.kind, ViolationKind::Feasibility);
  EXPECT_EQ(o.regions.back().level, "19");
  const Eigen::VectorXd x = o.counterexample;
  EXPECT_GE(tilde_b(m, art.R, x), 0.0);
  const GeneratorTerms t = lambda_xi_relu(m, art.R, sys, 1.0, x);
  for (int s = 0; s <= 200; ++s) EXPECT_LT(t.value(Eigen::VectorXd::Constant(1, -10.0 + 0.1 * s)), 0.0);
}

TEST(Verify, ConstantNegativeNetIsValid) {
  Benchmark p = load_benchmark("inverted_pendulum");
  for (Activation a : {Activation::Softplus, Activation::Relu}) {
    VerificationOutcome o = verify(constant_net(a, -1.0), p.system, p.regions, 1.0, p.inputs, {});
    EXPECT_EQ(o.status, VerifyStatus::Valid) << to_string(a);
  }
}
