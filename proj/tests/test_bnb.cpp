#include <gtest/gtest.h>

#include <random>

#include "sncbf/bnb.hpp"

using namespace sncbf;

namespace {

Expr x1() { return Expr::variable(0); }
Expr x2() { return Expr::variable(1); }

NlpProblem problem(Expr obj, std::vector<Expr> ineq, Box box) {
  NlpProblem p;
  p.objective = std::move(obj);
  p.ineq = std::move(ineq);
  p.box = std::move(box);
  return p;
}

}  // namespace

TEST(Bnb, SquareIsNonnegative) {
  BnbResult r = branch_and_bound(problem(pow(x1(), 2), {}, Box{{-1.0, 1.0}}), {});
  EXPECT_EQ(r.status, BnbStatus::Valid);
  EXPECT_GE(r.bound, -1e-4);
}

TEST(Bnb, LinearWithConstraint) {
  NlpProblem p = problem(x1(), {x1() - 0.5}, Box{{-1.0, 1.0}});
  BnbResult r = branch_and_bound(p, {});
  EXPECT_EQ(r.status, BnbStatus::Valid);
  EXPECT_GE(r.bound, -1e-4);
  BnbResult m = BranchAndBound(p, {}).minimize(1e-6);
  EXPECT_EQ(m.status, BnbStatus::Valid);
  EXPECT_NEAR(m.bound, 0.5, 1e-5);
  EXPECT_NEAR(m.upper, 0.5, 1e-5);
}

TEST(Bnb, DiskMinimumMatchesGrid) {
  // min x1 + x2^2 over the disk of radius 0.5
  NlpProblem p = problem(x1() + pow(x2(), 2), {0.25 - pow(x1(), 2) - pow(x2(), 2)}, Box{{-1.0, 1.0}, {-1.0, 1.0}});
  double grid = std::numeric_limits<double>::infinity();
  const int n = 1000;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double a = -1.0 + 2.0 * i / (n - 1), b = -1.0 + 2.0 * j / (n - 1);
      if (0.25 - a * a - b * b >= 0.0) grid = std::min(grid, a + b * b);
    }
  BnbResult m = BranchAndBound(p, {}).minimize(1e-5);
  EXPECT_EQ(m.status, BnbStatus::Valid);
  EXPECT_LE(m.bound, grid + 1e-9);
  EXPECT_NEAR(m.bound, grid, 1e-3);
  BnbResult d = branch_and_bound(p, {});
  ASSERT_EQ(d.status, BnbStatus::Counterexample);
  const double a = d.witness[0], b = d.witness[1];
  EXPECT_GE(0.25 - a * a - b * b, 0.0);
  EXPECT_LT(a + b * b, -1e-5);
}

TEST(Bnb, InfeasibleIsVacuouslyValid) {
  BnbResult r = branch_and_bound(problem(x1(), {x1() - 2.0}, Box{{-1.0, 1.0}}), {});
  EXPECT_EQ(r.status, BnbStatus::Valid);
  EXPECT_EQ(r.boxes, 1);
}

TEST(Bnb, EqualityBand) {
  // min x1 s.t. x1 = x2^2, x2 in [0.5, 1]: minimum 0.25
  NlpProblem p = problem(x1() - 0.3, {}, Box{{-1.0, 1.0}, {0.5, 1.0}});
  p.eq = {x1() - pow(x2(), 2)};
  BnbResult r = branch_and_bound(p, {});
  ASSERT_EQ(r.status, BnbStatus::Counterexample);
  EXPECT_LE(std::fabs(r.witness[0] - r.witness[1] * r.witness[1]), 1e-6);
  EXPECT_LT(r.witness_value, -1e-5);
  p.objective = x1() - 0.2;
  EXPECT_EQ(branch_and_bound(p, {}).status, BnbStatus::Valid);
}

TEST(Bnb, BudgetGivesUnknown) {
  BnbConfig cfg;
  cfg.max_boxes = 1;
  BnbResult r = branch_and_bound(problem(x1() * x2(), {}, Box{{-1.0, 1.0}, {-1.0, 1.0}}), cfg);
  EXPECT_EQ(r.status, BnbStatus::Unknown);
  EXPECT_LE(r.bound, -1.0 + 1e-6);
  EXPECT_GT(r.gap, 0.0);
}

TEST(Bnb, UnboundedBoxThrows) {
  EXPECT_THROW(BranchAndBound(problem(x1(), {}, Box{{-std::numeric_limits<double>::infinity(), 0.0}}), {}), Error);
}

// Random quadratics: witnesses are genuine; Valid verdicts agree with a grid
// and survive a halved tolerance.
TEST(Bnb, RandomQuadraticsSoundAndMonotone) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  int valid = 0, ce = 0;
  for (int t = 0; t < 40; ++t) {
    double c[6], d[6];
    for (double& v : c) v = g(rng);
    for (double& v : d) v = g(rng);
    c[0] = std::fabs(c[0]) * 0.5 + 0.05 * t;
    auto quad = [](const double* k) {
      return k[0] + k[1] * x1() + k[2] * x2() + k[3] * pow(x1(), 2) + k[4] * x1() * x2() + k[5] * pow(x2(), 2);
    };
    NlpProblem p = problem(quad(c), {quad(d)}, Box{{-1.0, 1.0}, {-1.0, 1.0}});
    BnbResult r = branch_and_bound(p, {});
    auto val = [](const double* k, double a, double b) {
      return k[0] + k[1] * a + k[2] * b + k[3] * a * a + k[4] * a * b + k[5] * b * b;
    };
    if (r.status == BnbStatus::Counterexample) {
      ++ce;
      EXPECT_GE(val(d, r.witness[0], r.witness[1]), 0.0);
      EXPECT_LT(val(c, r.witness[0], r.witness[1]), -1e-5);
    } else if (r.status == BnbStatus::Valid) {
      ++valid;
      const int n = 300;
      double grid = std::numeric_limits<double>::infinity();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double a = -1.0 + 2.0 * i / (n - 1), b = -1.0 + 2.0 * j / (n - 1);
          if (val(d, a, b) >= 0.0) grid = std::min(grid, val(c, a, b));
        }
      EXPECT_GE(grid, -1e-4 - 1e-9);
      if (grid > 0.05) {
        BnbConfig half;
        half.delta = 0.5e-4;
        EXPECT_EQ(branch_and_bound(p, half).status, BnbStatus::Valid);
      }
    }
  }
  EXPECT_GT(valid, 3);
  EXPECT_GT(ce, 3);
}
