#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "sncbf/system.hpp"

using namespace sncbf;

TEST(Benchmark, DarbouxDrift) {
  Benchmark b = load_benchmark("darboux");
  Eigen::VectorXd f = b.system.drift(Eigen::Vector2d(1.0, 1.0));
  EXPECT_DOUBLE_EQ(f(0), 3.0);
  EXPECT_DOUBLE_EQ(f(1), 0.0);
  EXPECT_EQ(b.system.n_u, 0);
}

TEST(Benchmark, PendulumInputGain) {
  Benchmark b = load_benchmark("inverted_pendulum");
  Eigen::MatrixXd g = b.system.input_matrix(Eigen::Vector2d(0.1, 0.2));
  EXPECT_DOUBLE_EQ(g(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g(1, 0), 1.0 / (1.0 * 10.0 * 10.0));
  EXPECT_DOUBLE_EQ(b.system.V(0, 0), 0.1);
  EXPECT_DOUBLE_EQ(b.system.V(1, 1), 0.1);
  Eigen::VectorXd f = b.system.drift(Eigen::Vector2d(std::numbers::pi / 2, 0.3));
  EXPECT_DOUBLE_EQ(f(0), 0.3);
  EXPECT_NEAR(f(1), kGravity / 10.0, 1e-15);
}

TEST(Benchmark, UnicycleDrift) {
  Benchmark b = load_benchmark("unicycle");
  Eigen::VectorXd f = b.system.drift(Eigen::Vector3d(0.0, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(f(0), 1.0);
  EXPECT_DOUBLE_EQ(f(1), 0.0);
  EXPECT_DOUBLE_EQ(f(2), 0.0);
  Benchmark fast = load_benchmark("unicycle", 2.0);
  EXPECT_DOUBLE_EQ(fast.system.drift(Eigen::Vector3d(0.0, 0.0, 0.0))(0), 2.0);
}

TEST(Benchmark, Unknown) { EXPECT_THROW(load_benchmark("cartpole"), ConfigError); }

TEST(InUnsafe, Examples) {
  Benchmark d = load_benchmark("darboux");
  EXPECT_TRUE(in_unsafe(d.regions, Eigen::Vector2d(-1.0, 0.0)));
  EXPECT_FALSE(in_unsafe(d.regions, Eigen::Vector2d(0.0, 0.0)));
  Benchmark p = load_benchmark("inverted_pendulum");
  EXPECT_TRUE(in_unsafe(p.regions, Eigen::Vector2d(std::numbers::pi / 5, 0.0)));
  EXPECT_FALSE(in_unsafe(p.regions, Eigen::Vector2d(std::numbers::pi / 6, 0.0)));
  Benchmark u = load_benchmark("unicycle");
  EXPECT_TRUE(in_unsafe(u.regions, Eigen::Vector3d(0.0, 0.1, 1.9)));
  EXPECT_FALSE(in_unsafe(u.regions, Eigen::Vector3d(0.3, 0.1, 0.0)));
}

TEST(Regions, SafeUnsafePartition) {
  for (const char* name : {"darboux", "inverted_pendulum", "unicycle"}) {
    Benchmark b = load_benchmark(name);
    std::mt19937_64 rng(1);
    const int n = b.regions.dim();
    Eigen::VectorXd x(n);
    for (int s = 0; s < 10000; ++s) {
      for (int i = 0; i < n; ++i) x(i) = std::uniform_real_distribution<double>(b.regions.X[i].lo, b.regions.X[i].hi)(rng);
      const bool safe = b.regions.h_value(x) >= 0.0;
      EXPECT_NE(safe, in_unsafe(b.regions, x));
    }
  }
}

TEST(Regions, PendulumBoxMembership) {
  Benchmark p = load_benchmark("inverted_pendulum");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-std::numbers::pi / 4, std::numbers::pi / 4);
  for (int s = 0; s < 10000; ++s) {
    Eigen::Vector2d x(u(rng), u(rng));
    const bool inside = std::fabs(x(0)) <= std::numbers::pi / 6 && std::fabs(x(1)) <= std::numbers::pi / 6;
    EXPECT_EQ(!inside, in_unsafe(p.regions, x));
  }
}

TEST(Regions, InitialSetMustBeSafe) {
  EXPECT_THROW(RegionSpec::build(Box{{-2, 2}, {-2, 2}}, Box{{-1, 0}, {0, 0.5}}, SafeForm::Function, "x1 + x2^2", {}),
               ConfigError);
  EXPECT_THROW(RegionSpec::build(Box{{-2, 2}}, Box{{-3, 0}}, SafeForm::Function, "1", {}), ConfigError);
}

TEST(Config, BenchmarkRoundTrip) {
  for (const char* name : {"darboux", "inverted_pendulum", "unicycle"}) {
    Benchmark b = load_benchmark(name);
    const nlohmann::json sj = b.system.to_json();
    const nlohmann::json rj = b.regions.to_json();
    std::vector<std::vector<double>> v = sj["diffusion"];
    Eigen::MatrixXd V(v.size(), v[0].size());
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t k = 0; k < v[i].size(); ++k) V(i, k) = v[i][k];
    auto sys = StochasticAffineSystem::build(sj["state_dim"], sj["input_dim"], sj["drift"],
                                             sj["input_matrix"].get<std::vector<std::vector<std::string>>>(), V);
    EXPECT_EQ(sys.to_json().dump(), sj.dump());
    auto to_box = [](const nlohmann::json& j) {
      Box b;
      for (const auto& p : j) b.push_back({p[0].get<double>(), p[1].get<double>()});
      return b;
    };
    SafeForm form = rj["safe"].contains("h") ? SafeForm::Function
                    : rj["safe"].contains("safe_box") ? SafeForm::SafeBox
                                                      : SafeForm::UnsafeBox;
    std::string h = form == SafeForm::Function ? rj["safe"]["h"].get<std::string>() : "";
    Box bx = form == SafeForm::SafeBox ? to_box(rj["safe"]["safe_box"])
             : form == SafeForm::UnsafeBox ? to_box(rj["safe"]["unsafe_box"])
                                           : Box{};
    auto reg = RegionSpec::build(to_box(rj["state_box"]), to_box(rj["initial_box"]), form, h, bx);
    EXPECT_EQ(reg.to_json().dump(), rj.dump());
  }
}

TEST(System, Errors) {
  EXPECT_THROW(StochasticAffineSystem::build(2, 0, {"x3", "0"}, {}, Eigen::MatrixXd::Zero(2, 2)), ConfigError);
  EXPECT_THROW(StochasticAffineSystem::build(2, 0, {"x1"}, {}, Eigen::MatrixXd::Zero(2, 2)), ConfigError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(StochasticAffineSystem::build(2, 0, {"x1", "x2"}, {}, bad), ConfigError);
}
