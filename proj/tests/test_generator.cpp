#include <gtest/gtest.h>

#include <random>

#include "sncbf/enumerate.hpp"
#include "sncbf/generator.hpp"

using namespace sncbf;

namespace {

Eigen::VectorXd sample_box(std::mt19937_64& rng, const Box& b) {
  Eigen::VectorXd x(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) x(i) = std::uniform_real_distribution<double>(b[i].lo, b[i].hi)(rng);
  return x;
}

Mlp one_neuron(double r2) {
  Mlp m({2, 1, 1}, Activation::Relu);
  m.weight(0)(0, 0) = 1.0;
  m.weight(1)(0, 0) = 1.0;
  m.bias(1)(0) = r2;
  return m;
}

// Relu net with non-negative output weights and a non-empty super-level set.
Mlp positive_relu(std::uint64_t seed, int hidden = 16) {
  Mlp m = Mlp::random({2, hidden, 1}, Activation::Relu, seed);
  m.weight(1) = m.weight(1).cwiseAbs();
  m.bias(1)(0) = -0.2;
  return m;
}

}  // namespace

TEST(SmoothGenerator, ConstantNet) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m({2, 5, 1}, Activation::Softplus);
  m.bias(1)(0) = 2.0;
  EXPECT_DOUBLE_EQ(smooth_generator(m, b.system, Eigen::Vector2d(0.2, 0.1), Eigen::VectorXd::Constant(1, 3.0)), 0.0);
  GeneratorTerms t = lambda_xi_smooth(m, b.system, 0.5, Eigen::Vector2d(0.2, 0.1));
  EXPECT_DOUBLE_EQ(t.lambda(0), 0.0);
  EXPECT_DOUBLE_EQ(t.xi, 0.5 * 2.0);
}

TEST(SmoothGenerator, TermByTermTanhPendulum) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m = Mlp::random({2, 8, 1}, Activation::Tanh, 4);
  std::mt19937_64 rng(1);
  for (int s = 0; s < 50; ++s) {
    Eigen::VectorXd x = sample_box(rng, b.regions.X);
    Eigen::Vector2d f(x(1), kGravity / 10.0 * std::sin(x(0)));
    double drift = 0.0, diff = 0.0;
    for (int j = 0; j < 8; ++j) {
      const Eigen::Vector2d w = m.W1().row(j).transpose();
      const double t = std::tanh(w.dot(x) + m.r1()(j));
      drift += m.W2()(j) * (1 - t * t) * w.dot(f);
      const Eigen::Vector2d vw = b.system.V.transpose() * w;
      diff += 0.5 * m.W2()(j) * (-2 * t * (1 - t * t)) * vw.squaredNorm();
    }
    EXPECT_NEAR(smooth_generator(m, b.system, x, Eigen::VectorXd::Zero(1)), drift + diff, 1e-9);
  }
}

TEST(SmoothGenerator, AffineInU) {
  Benchmark b = load_benchmark("unicycle");
  Mlp m = Mlp::random({3, 6, 1}, Activation::Softplus, 2);
  Eigen::Vector3d x(0.3, -0.4, 0.2);
  Eigen::VectorXd u1 = Eigen::VectorXd::Constant(1, 0.7), u2 = Eigen::VectorXd::Constant(1, -2.1), z = Eigen::VectorXd::Zero(1);
  const double r = smooth_generator(m, b.system, x, u1 + u2) - smooth_generator(m, b.system, x, u1) -
                   smooth_generator(m, b.system, x, u2) + smooth_generator(m, b.system, x, z);
  EXPECT_NEAR(r, 0.0, 1e-12);
}

TEST(LambdaXiSmooth, Identity) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m = Mlp::random({2, 10, 1}, Activation::Softplus, 8);
  std::mt19937_64 rng(2);
  const double k = 1.3;
  for (int s = 0; s < 100; ++s) {
    Eigen::VectorXd x = sample_box(rng, b.regions.X);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(1, std::uniform_real_distribution<double>(-50, 50)(rng));
    GeneratorTerms t = lambda_xi_smooth(m, b.system, k, x);
    EXPECT_NEAR(smooth_generator(m, b.system, x, u) + k * m.forward(x), t.value(u), 1e-10);
  }
}

TEST(LambdaXiSmooth, StructuralZero) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m = Mlp::random({2, 10, 1}, Activation::Softplus, 8);
  m.weight(0).col(1).setZero();
  EXPECT_DOUBLE_EQ(lambda_xi_smooth(m, b.system, 1.0, Eigen::Vector2d(0.1, 0.3)).lambda(0), 0.0);
}

TEST(TildeB, HandValue) {
  Mlp m({2, 1, 1}, Activation::Relu);
  m.weight(0)(0, 0) = 1.0;
  m.weight(1)(0, 0) = 1.0;
  NeuronBounds R{Eigen::VectorXd::Constant(1, 2.0)};
  Eigen::Vector2d x(1.0, 0.0);
  EXPECT_DOUBLE_EQ(m.forward(x), 1.0);
  EXPECT_DOUBLE_EQ(tilde_b(m, R, x), 0.25);
}

TEST(TildeB, AllInactive) {
  Mlp m = positive_relu(3, 4);
  m.bias(0) = Eigen::VectorXd::Constant(4, -10.0);
  m.bias(1)(0) = 0.7;
  NeuronBounds R{Eigen::VectorXd::Constant(4, 20.0)};
  Eigen::Vector2d x(0.1, 0.2);
  EXPECT_DOUBLE_EQ(m.forward(x), 0.7);
  EXPECT_LE(tilde_b(m, R, x), m.forward(x));
}

// With a negative output weight the lower bound fails inside |z| < R.
TEST(TildeB, NegativeOutputWeightBreaksDomination) {
  Mlp m({2, 1, 1}, Activation::Relu);
  m.weight(0)(0, 0) = 1.0;
  m.weight(1)(0, 0) = -1.0;
  m.bias(1)(0) = 2.0;
  NeuronBounds R{Eigen::VectorXd::Constant(1, 2.0)};
  Eigen::Vector2d x(1.0, 0.0);  // z = 1, B = 1
  EXPECT_GT(tilde_b(m, R, x), m.forward(x));
}

TEST(TildeB, GlobalQuadratic) {
  Mlp m = positive_relu(5, 6);
  NeuronBounds R{Eigen::VectorXd::Constant(6, 3.0)};
  Benchmark d = load_benchmark("darboux");
  RegionTerms t = lambda_xi_relu_region(m, R, d.system, 1.0, ActivationSet::from_string("000000"));
  std::mt19937_64 rng(3);
  for (int s = 0; s < 200; ++s) {
    Eigen::VectorXd x = sample_box(rng, d.regions.X);
    EXPECT_NEAR(eval_point(t.tilde_b, std::vector<double>{x(0), x(1)}), tilde_b(m, R, x), 1e-12);
  }
}

TEST(NeuronBoundsTest, OneNeuron) {
  Mlp m = one_neuron(-0.5);
  Box X{{-1.0, 1.0}, {-1.0, 1.0}};
  NeuronBounds R = compute_neuron_bounds(m, X, {ActivationSet::from_string("1")});
  EXPECT_NEAR(R.R(0), 1.01, 1e-9);
}

TEST(NeuronBoundsTest, ZeroHiddenWeights) {
  Mlp m({2, 2, 1}, Activation::Relu);
  m.bias(0) << 0.4, -0.3;
  m.weight(1) << 1.0, 1.0;
  m.bias(1)(0) = 0.1;
  Box X{{-1.0, 1.0}, {-1.0, 1.0}};
  NeuronBounds R = compute_neuron_bounds(m, X, {m.activation_set(Eigen::Vector2d(0, 0))});
  EXPECT_NEAR(R.R(0), 0.4 * 1.01, 1e-9);
  EXPECT_NEAR(R.R(1), 0.3 * 1.01, 1e-9);
  Mlp z({2, 1, 1}, Activation::Relu);
  z.bias(1)(0) = 1.0;
  NeuronBounds Rz = compute_neuron_bounds(z, X, {ActivationSet::from_string("0")});
  EXPECT_DOUBLE_EQ(Rz.R(0), 1e-6);
}

TEST(NeuronBoundsTest, SampledCertificateAndDomination) {
  Benchmark d = load_benchmark("darboux");
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    Mlp m = positive_relu(seed);
    auto x0 = find_superlevel_point(m, d.regions.X_I, d.regions.X, 1);
    ASSERT_TRUE(x0.has_value());
    auto Q = enumerate_activation_sets(m, *x0, d.regions.X).sets;
    NeuronBounds R = compute_neuron_bounds(m, d.regions.X, Q);
    std::mt19937_64 rng(seed);
    int checked = 0;
    while (checked < 10000) {
      Eigen::VectorXd x = sample_box(rng, d.regions.X);
      if (m.forward(x) < 0.0) continue;
      ++checked;
      Eigen::VectorXd z = m.preactivation(x);
      for (int j = 0; j < z.size(); ++j) ASSERT_LE(std::fabs(z(j)), R.R(j));
      ASSERT_LE(tilde_b(m, R, x), m.forward(x));
    }
  }
}

TEST(ReluGenerator, ZeroNet) {
  Benchmark b = load_benchmark("inverted_pendulum");
  b.system.V.setZero();
  Mlp m = Mlp::random({2, 4, 1}, Activation::Relu, 1);
  m.weight(1).setZero();
  NeuronBounds R{Eigen::VectorXd::Ones(4)};
  EXPECT_DOUBLE_EQ(relu_generator(m, R, b.system, Eigen::Vector2d(0.1, 0.2), Eigen::VectorXd::Constant(1, 4.0)), 0.0);
}

TEST(ReluGenerator, AffineInU) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m = positive_relu(2, 5);
  NeuronBounds R{Eigen::VectorXd::Constant(5, 2.0)};
  Eigen::Vector2d x(0.11, -0.23);
  auto A = [&](double u) { return relu_generator(m, R, b.system, x, Eigen::VectorXd::Constant(1, u)); };
  EXPECT_NEAR(A(1.5 + 2.5) - A(1.5) - A(2.5) + A(0.0), 0.0, 1e-12);
}

TEST(ReluGenerator, TermByTermDarboux) {
  Benchmark d = load_benchmark("darboux");
  Mlp m = positive_relu(7);
  NeuronBounds R{Eigen::VectorXd::Constant(16, 2.5)};
  std::mt19937_64 rng(9);
  for (int s = 0; s < 100; ++s) {
    Eigen::VectorXd x = sample_box(rng, d.regions.X);
    const Eigen::Vector2d f(x(1) + 2 * x(0) * x(1), -x(0) + 2 * x(0) * x(0) - x(1) * x(1));
    double expected = 0.0;
    for (int j = 0; j < 16; ++j) {
      const Eigen::Vector2d w = m.W1().row(j).transpose();
      const double z = w.dot(x) + m.r1()(j);
      const double ind = z > 0 ? 1.0 : 0.0;
      const double sgn = z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
      const double c = std::fabs(m.W2()(j)) / 2.5;
      const Eigen::Vector2d zeta = 2.0 * z * w;  // gradient of z^2
      expected += m.W2()(j) * (ind - 0.5 * sgn) * w.dot(f);
      expected -= 0.5 * c * (zeta.dot(f) + (d.system.V.transpose() * w).squaredNorm());
    }
    EXPECT_NEAR(relu_generator(m, R, d.system, x, Eigen::VectorXd(0)), expected, 1e-9);
  }
}

TEST(ReluRegionTerms, NoInput) {
  Benchmark d = load_benchmark("darboux");
  Mlp m = positive_relu(7);
  NeuronBounds R{Eigen::VectorXd::Constant(16, 2.5)};
  RegionTerms t = lambda_xi_relu_region(m, R, d.system, 1.0, m.activation_set(Eigen::Vector2d(0.5, 1.5)));
  EXPECT_TRUE(t.lambda.empty());
}

TEST(ReluRegionTerms, PointwiseIdentity) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m = positive_relu(21, 8);
  NeuronBounds R{Eigen::VectorXd::Constant(8, 1.7)};
  const double k = 0.8;
  std::mt19937_64 rng(4);
  for (int s = 0; s < 100; ++s) {
    Eigen::VectorXd x = sample_box(rng, b.regions.X);
    ActivationSet S = m.activation_set(x);
    RegionTerms t = lambda_xi_relu_region(m, R, b.system, k, S);
    std::vector<double> xs{x(0), x(1)};
    const double u = std::uniform_real_distribution<double>(-20, 20)(rng);
    const double lhs = relu_generator(m, R, b.system, x, Eigen::VectorXd::Constant(1, u)) + k * tilde_b(m, R, x);
    EXPECT_NEAR(eval_point(t.lambda[0], xs) * u + eval_point(t.xi, xs), lhs, 1e-9);
    GeneratorTerms g = lambda_xi_relu(m, R, b.system, k, x);
    EXPECT_NEAR(g.value(Eigen::VectorXd::Constant(1, u)), lhs, 1e-9);
  }
}

TEST(ReluRegionTerms, ZeroOutputWeights) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Mlp m = Mlp::random({2, 3, 1}, Activation::Relu, 1);
  m.weight(1).setZero();
  m.bias(1)(0) = 0.4;
  NeuronBounds R{Eigen::VectorXd::Ones(3)};
  RegionTerms t = lambda_xi_relu_region(m, R, b.system, 2.0, ActivationSet::from_string("101"));
  std::vector<double> xs{0.2, -0.1};
  EXPECT_DOUBLE_EQ(eval_point(t.lambda[0], xs), 0.0);
  EXPECT_DOUBLE_EQ(eval_point(t.xi, xs), 2.0 * 0.4);
  EXPECT_DOUBLE_EQ(eval_point(t.tilde_b, xs), 0.4);
}
