#include <gtest/gtest.h>

#include <random>

#include "sncbf/train.hpp"

using namespace sncbf;

namespace {

const Box kSquare{{-1.0, 1.0}, {-1.0, 1.0}};

Mlp constant_net(Activation a, double value) {
  Mlp m({2, 1, 1}, a);
  m.bias(1)(0) = value;
  return m;
}

StochasticAffineSystem still(int n_u) {
  std::vector<std::vector<std::string>> g;
  if (n_u) g = {{"0"}, {"0"}};
  return StochasticAffineSystem::build(2, n_u, {"0", "0"}, g, Eigen::MatrixXd::Zero(2, 2));
}

StochasticAffineSystem oscillator() {
  return StochasticAffineSystem::build(2, 1, {"x2", "-x1 + 0.5*x2*x1"}, {{"0"}, {"1 + 0.5*x1"}},
                                       (Eigen::MatrixXd(2, 2) << 0.2, 0.0, 0.0, 0.3).finished());
}

RegionSpec strip() {
  return RegionSpec::build(kSquare, Box{{-0.2, 0.2}, {-0.2, 0.2}}, SafeForm::Function, "0.8 - x1", {});
}

std::vector<Eigen::VectorXd> random_points(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Eigen::VectorXd> pts;
  for (int i = 0; i < count; ++i) pts.push_back(Eigen::Vector2d(u(rng), u(rng)));
  return pts;
}

// Central differences with step 1e-4 on 10 random coordinates, 1e-3 relative.
void expect_gradient_matches(const Mlp& net, const Eigen::VectorXd& grad, const std::function<double(const Mlp&)>& f,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, grad.size() - 1);
  const Eigen::VectorXd p = net.params();
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index i = pick(rng);
    Mlp a = net, b = net;
    Eigen::VectorXd q = p;
    q(i) += 1e-4;
    a.set_params(q);
    q(i) -= 2e-4;
    b.set_params(q);
    const double fd = (f(a) - f(b)) / 2e-4;
    EXPECT_NEAR(grad(i), fd, 1e-3 * std::max(std::fabs(fd), 1e-3)) << "coordinate " << i;
  }
}

}  // namespace

TEST(Datasets, OneDimensionalSpacing) {
  auto pts = covering_grid(Box{{0.0, 1.0}}, 0.25);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_DOUBLE_EQ(pts[0](0), 0.0);
  EXPECT_DOUBLE_EQ(pts[1](0), 0.5);
  EXPECT_DOUBLE_EQ(pts[2](0), 1.0);
}

TEST(Datasets, RejectsFullDensityAtDeskScale) {
  Benchmark p = load_benchmark("inverted_pendulum");
  try {
    sample_datasets(p.regions, 0.00016);
    FAIL() << "expected rejection";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("desk scale"), std::string::npos);
  }
  EXPECT_NO_THROW(sample_datasets(p.regions, 0.01));
}

TEST(Datasets, CoversWithinRadius) {
  Benchmark p = load_benchmark("inverted_pendulum");
  const double eps = 0.05;
  Datasets d = sample_datasets(p.regions, eps);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-detail::kPi / 4, detail::kPi / 4);
  for (int t = 0; t < 10000; ++t) {
    const Eigen::Vector2d x(u(rng), u(rng));
    double best = std::numeric_limits<double>::infinity();
    for (const auto& y : d.D) best = std::min(best, (x - y).norm());
    ASSERT_LE(best, eps);
  }
  for (const auto& x : d.S) EXPECT_TRUE(p.regions.in_initial(x));
  for (const auto& x : d.U) EXPECT_LT(p.regions.h_value(x), 0.0);
  EXPECT_FALSE(d.S.empty());
  EXPECT_FALSE(d.U.empty());
}

TEST(QValues, Examples) {
  const RegionSpec r = strip();
  const double delta = 0.01;
  // B = -delta everywhere: q2 = 0 on the unsafe side.
  QValues q = q_values(constant_net(Activation::Softplus, -delta), still(0), 1.0, delta, r, {}, Eigen::Vector2d(0.9, 0.0));
  EXPECT_TRUE(q.unsafe);
  EXPECT_DOUBLE_EQ(q.q2, 0.0);
  EXPECT_DOUBLE_EQ(q.q1, 0.0);
  // Constant positive net, no dynamics: q3 = -k c.
  QValues c = q_values(constant_net(Activation::Softplus, 0.7), still(0), 2.0, delta, r, {}, Eigen::Vector2d(0.1, 0.1));
  EXPECT_TRUE(c.initial);
  EXPECT_DOUBLE_EQ(c.q1, -0.7);
  EXPECT_DOUBLE_EQ(c.q3, -1.4);
}

TEST(PsiStar, MaxSemanticsAndSecondPass) {
  const RegionSpec r = strip();
  Datasets d = sample_datasets(r, 0.2);
  const Mlp m = Mlp::random({2, 5, 1}, Activation::Tanh, 2);
  const auto sys = oscillator();
  const InputSet U{Box{{-1.0, 1.0}}};
  const double psi = compute_psi_star(m, sys, 1.0, 0.01, d, r, U);
  double second = -std::numeric_limits<double>::infinity();
  for (const auto& x : d.S) second = std::max(second, -m.forward(x));
  for (const auto& x : d.U) second = std::max(second, m.forward(x) + 0.01);
  for (const auto& x : d.D) {
    const GeneratorTerms t = lambda_xi_smooth(m, sys, 1.0, x);
    second = std::max(second, -t.value(sncbf_qp_control(t, Eigen::VectorXd::Zero(1), U).u));
  }
  EXPECT_EQ(psi, second);
  // Every q at most -0.1: psi* is the largest of them.
  Datasets only_s;
  only_s.S = {Eigen::Vector2d(0.0, 0.0)};
  EXPECT_DOUBLE_EQ(compute_psi_star(constant_net(Activation::Tanh, 0.3), still(0), 1.0, 0.0, only_s, r, {}), -0.3);
  Datasets one;
  one.S = {Eigen::Vector2d(0.0, 0.0)};
  EXPECT_GE(compute_psi_star(constant_net(Activation::Tanh, -0.2), still(0), 1.0, 0.0, one, r, {}), 0.2);
}

TEST(Validity, ReferenceTriples) {
  EXPECT_TRUE(check_validity(2.4, 0.00016, -0.00042));
  EXPECT_TRUE(check_validity(4.0, 0.01, -0.04002));
  EXPECT_FALSE(check_validity(4.0, 0.01, 0.0));
  EXPECT_FALSE(check_validity(0.1, 1e-6, 0.0));
}

TEST(Validity, LossAndGradient) {
  EXPECT_DOUBLE_EQ(loss_validity(4.0, 0.01, -0.04), 0.0);
  EXPECT_DOUBLE_EQ(loss_validity(4.0, 0.01, 0.0), 0.04);
  for (double psi : {-0.5, -0.01, 0.2}) {
    const double fd = (loss_validity(4.0, 0.01, psi + 1e-6) - loss_validity(4.0, 0.01, psi - 1e-6)) / 2e-6;
    EXPECT_NEAR(loss_validity_dpsi(4.0, 0.01, psi), fd, 1e-6);
  }
}

TEST(LossSmooth, SlackAndSingleViolation) {
  const RegionSpec r = strip();
  Datasets d;
  d.S = {Eigen::Vector2d(0.0, 0.0)};
  d.U = {Eigen::Vector2d(0.9, 0.0)};
  d.D = {Eigen::Vector2d(0.5, 0.5)};
  // B = 0.3: q1 = -0.3, q2 = 0.31, q3 = -0.3 (no dynamics)
  const Mlp m = constant_net(Activation::Softplus, 0.3);
  EXPECT_DOUBLE_EQ(loss_smooth(m, still(0), 1.0, 0.01, d, r, {}, 0.4), 0.0);
  EXPECT_NEAR(loss_smooth(m, still(0), 1.0, 0.01, d, r, {}, 0.0), 0.31 / 3.0, 1e-15);
  // Hand assembly at psi = -0.35: hinges 0.05, 0.66, 0.05.
  EXPECT_NEAR(loss_smooth(m, still(0), 1.0, 0.01, d, r, {}, -0.35), (0.05 + 0.66 + 0.05) / 3.0, 1e-15);
}

TEST(LossSmooth, GradientMatchesFiniteDifferences) {
  const RegionSpec r = strip();
  Datasets d = sample_datasets(r, 0.15);
  const auto sys = oscillator();
  const InputSet U{Box{{-0.3, 0.3}}};
  for (Activation a : {Activation::Softplus, Activation::Tanh}) {
    const Mlp m = Mlp::random({2, 6, 1}, a, 9);
    const double psi = -0.05;
    const LossGrad lg = loss_smooth_grad(m, sys, 1.0, 0.01, d, r, U, psi, qp_margin_for(psi));
    ASSERT_GT(lg.value, 0.0);
    expect_gradient_matches(m, lg.grad, [&](const Mlp& n) { return loss_smooth(n, sys, 1.0, 0.01, d, r, U, psi, qp_margin_for(psi)); }, 1);
  }
}

TEST(LossCorrect, Examples) {
  const RegionSpec r = strip();
  const std::vector<Eigen::VectorXd> safe{Eigen::Vector2d(0.0, 0.0)}, unsafe{Eigen::Vector2d(0.9, 0.0)};
  const double eps = 0.1;
  // Smooth: B >= eps on the initial sample, B <= -eps on the unsafe one.
  Mlp m({2, 1, 1}, Activation::Softplus);
  m.weight(0)(0, 0) = 1.0;
  m.weight(1)(0, 0) = -10.0;
  m.bias(1)(0) = 10.0 * scalar::softplus(0.5);
  std::vector<Eigen::VectorXd> both{safe[0], unsafe[0]};
  EXPECT_GE(m.forward(safe[0]), eps);
  EXPECT_LE(m.forward(unsafe[0]), -eps);
  EXPECT_DOUBLE_EQ(loss_correct(BarrierView{m}, r, both, eps), 0.0);
  // One unsafe sample with B = 0 among N = 4 samples.
  std::vector<Eigen::VectorXd> four{unsafe[0], Eigen::Vector2d(0.5, 0.9), Eigen::Vector2d(-0.5, 0.9), Eigen::Vector2d(0.0, -0.9)};
  EXPECT_DOUBLE_EQ(loss_correct(BarrierView{constant_net(Activation::Softplus, 0.0)}, r, four, eps), eps / 4.0);
  // Hand assembly: B = 0.05; safe hinge 0.05 at the initial point, none
  // outside the initial set (smooth), unsafe hinge 0.15.
  EXPECT_NEAR(loss_correct(BarrierView{constant_net(Activation::Softplus, 0.05)}, r, four, eps), 0.15 / 4.0, 1e-15);
  std::vector<Eigen::VectorXd> toy{safe[0], unsafe[0], Eigen::Vector2d(0.5, 0.9)};
  EXPECT_NEAR(loss_correct(BarrierView{constant_net(Activation::Softplus, 0.05)}, r, toy, eps), (0.05 + 0.15) / 3.0, 1e-15);
  // ReLU: the safe hinge covers every safe sample.
  NeuronBounds R{Eigen::VectorXd::Ones(1)};
  const Mlp c = constant_net(Activation::Relu, 0.05);
  EXPECT_NEAR(loss_correct(BarrierView{c, &R}, r, toy, eps), (0.05 + 0.15 + 0.05) / 3.0, 1e-15);
  // A one-neuron ReLU net where B and B̃ differ at the safe sample (0.5, 0.9):
  // z = 0.5, R = 1, B = 0.5 - 0.45 = 0.05, B̃ = 0.25 - 0.125 - 0.45 = -0.325.
  Mlp n({2, 1, 1}, Activation::Relu);
  n.weight(0)(0, 0) = 1.0;
  n.weight(1)(0, 0) = 1.0;
  n.bias(1)(0) = -0.45;
  const std::vector<Eigen::VectorXd> one{Eigen::Vector2d(0.5, 0.9)};
  EXPECT_NEAR(loss_correct(BarrierView{n, &R}, r, one, eps), 0.05, 1e-12);
  EXPECT_NEAR(loss_correct(BarrierView{n, &R}, r, one, eps, SafeHinge::SafeLower), 0.425, 1e-12);
  EXPECT_NEAR(loss_correct(BarrierView{n, &R}, r, one, eps, SafeHinge::Initial), 0.0, 1e-12);
}

TEST(LossCorrect, GradientMatchesFiniteDifferences) {
  const RegionSpec r = strip();
  const auto pts = random_points(200, 3);
  {
    const Mlp m = Mlp::random({2, 6, 1}, Activation::Softplus, 4);
    const LossGrad lg = loss_correct_grad(BarrierView{m}, r, pts, 0.5);
    ASSERT_GT(lg.value, 0.0);
    expect_gradient_matches(m, lg.grad, [&](const Mlp& n) { return loss_correct(BarrierView{n}, r, pts, 0.5); }, 2);
  }
  {
    Mlp m = Mlp::random({2, 6, 1}, Activation::Relu, 5);
    m.weight(1) = m.weight(1).cwiseAbs();
    const NeuronBounds R = interval_neuron_bounds(m, kSquare);
    for (SafeHinge h : {SafeHinge::ByMode, SafeHinge::SafeLower, SafeHinge::Initial}) {
      const LossGrad lg = loss_correct_grad(BarrierView{m, &R}, r, pts, 0.5, true, h);
      ASSERT_GT(lg.value, 0.0);
      expect_gradient_matches(m, lg.grad, [&](const Mlp& n) { return loss_correct(BarrierView{n, &R}, r, pts, 0.5, h); }, 3);
    }
  }
  {
    // Two hidden layers fall back to differences of the loss itself.
    const Mlp m = Mlp::random({2, 4, 3, 1}, Activation::Tanh, 6);
    const LossGrad lg = loss_correct_grad(BarrierView{m}, r, pts, 0.5);
    expect_gradient_matches(m, lg.grad, [&](const Mlp& n) { return loss_correct(BarrierView{n}, r, pts, 0.5); }, 4);
  }
}

TEST(LossFeasible, Examples) {
  const std::vector<Eigen::VectorXd> x{Eigen::Vector2d(0.1, 0.2)};
  const Eigen::VectorXd u_ref = Eigen::VectorXd::Zero(1);
  EXPECT_DOUBLE_EQ(loss_feasible(BarrierView{constant_net(Activation::Tanh, 1.0)}, still(1), 1.0, x, u_ref, 50.0, {}), 0.0);
  // lambda = 0, xi = k B = -1: r = 1 is forced.
  EXPECT_DOUBLE_EQ(loss_feasible(BarrierView{constant_net(Activation::Tanh, -1.0)}, still(1), 1.0, x, u_ref, 50.0, {}), 50.0);
}

TEST(LossFeasible, GradientMatchesFiniteDifferences) {
  const auto pts = random_points(100, 5);
  const auto sys = oscillator();
  const Eigen::VectorXd u_ref = Eigen::VectorXd::Constant(1, 0.1);
  for (bool bounded : {false, true}) {
    const InputSet U = bounded ? InputSet{Box{{-0.2, 0.2}}} : InputSet{};
    {
      const Mlp m = Mlp::random({2, 6, 1}, Activation::Softplus, 7);
      auto f = [&](const Mlp& n) { return loss_feasible(BarrierView{n}, sys, 1.0, pts, u_ref, 3.0, U, 0.2); };
      const LossGrad lg = loss_feasible_grad(BarrierView{m}, sys, 1.0, pts, u_ref, 3.0, U, 0.2);
      ASSERT_GT(lg.value, 0.0);
      EXPECT_NEAR(lg.value, f(m), 1e-12);
      expect_gradient_matches(m, lg.grad, f, 5);
    }
    {
      Mlp m = Mlp::random({2, 6, 1}, Activation::Relu, 8);
      m.weight(1) = m.weight(1).cwiseAbs();
      const NeuronBounds R = interval_neuron_bounds(m, kSquare);
      auto f = [&](const Mlp& n) { return loss_feasible(BarrierView{n, &R}, sys, 1.0, pts, u_ref, 3.0, U, 0.2); };
      const LossGrad lg = loss_feasible_grad(BarrierView{m, &R}, sys, 1.0, pts, u_ref, 3.0, U, 0.2);
      ASSERT_GT(lg.value, 0.0);
      expect_gradient_matches(m, lg.grad, f, 6);
    }
  }
}

TEST(TrainSmooth, DeterministicGivenSeed) {
  Benchmark p = load_benchmark("inverted_pendulum");
  SmoothTrainConfig cfg;
  cfg.eps_bar = 0.05;
  cfg.max_epochs = 5;
  cfg.ridge_slope = 4.0;
  const SmoothTrainResult a = train_verifiable_smooth(cfg, p);
  const SmoothTrainResult b = train_verifiable_smooth(cfg, p);
  ASSERT_EQ(a.history.rows.size(), b.history.rows.size());
  for (std::size_t i = 0; i < a.history.rows.size(); ++i) EXPECT_EQ(a.history.rows[i], b.history.rows[i]);
  EXPECT_EQ(a.net.params(), b.net.params());
  EXPECT_EQ(a.psi_star, b.psi_star);
  EXPECT_EQ(a.valid, a.certified && check_validity(cfg.l_max(), cfg.eps_bar, a.psi_star));
}

TEST(TrainSmooth, EpochCapReportsNonConvergence) {
  Benchmark p = load_benchmark("inverted_pendulum");
  SmoothTrainConfig cfg;
  cfg.eps_bar = 0.05;
  cfg.max_epochs = 1;
  const SmoothTrainResult r = train_verifiable_smooth(cfg, p);
  EXPECT_FALSE(r.valid);
  EXPECT_FALSE(r.diagnostics.empty());
}

TEST(Vitl, ValidNetNeedsNoTraining) {
  Benchmark p = load_benchmark("inverted_pendulum");
  VitlConfig cfg;
  cfg.activation = Activation::Softplus;
  cfg.hidden = {1};
  const Mlp init = constant_net(Activation::Softplus, -1.0);
  const VitlResult r = train_vitl(cfg, p, &init);
  EXPECT_EQ(r.outcome.status, VerifyStatus::Valid);
  EXPECT_EQ(r.rounds, 0);
  EXPECT_EQ(r.epochs, 0);
  EXPECT_EQ(r.net.params(), init.params());
}

TEST(Vitl, DatasetGrowsWithGenuineCounterexamples) {
  Benchmark d = load_benchmark("darboux");
  VitlConfig cfg;
  cfg.max_rounds = 4;
  cfg.epochs_per_round = 1;
  cfg.eps_bar = 0.2;
  const VitlResult r = train_vitl(cfg, d);
  ASSERT_FALSE(r.history.rows.empty());
  for (std::size_t i = 1; i < r.history.rows.size(); ++i) EXPECT_GE(r.history.rows[i][4], r.history.rows[i - 1][4]);
  EXPECT_FALSE(r.counterexamples.empty());
  for (const auto& ce : r.counterexamples) {
    EXPECT_LT(ce.violation, 0.0);
    EXPECT_TRUE(std::find_if(r.dataset.begin(), r.dataset.end(), [&](const Eigen::VectorXd& y) { return y == ce.x; }) !=
                r.dataset.end());
  }
}
