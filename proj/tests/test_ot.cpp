#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "otms/ot.hpp"
#include "otms/selftest.hpp"

using namespace otms;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(Index(v.size()));
  Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

std::vector<Index> iota(Index n) {
  std::vector<Index> s(static_cast<std::size_t>(n));
  std::iota(s.begin(), s.end(), Index{0});
  return s;
}

void expect_feasible(const TransportPlan& p) {
  EXPECT_TRUE(p.nonnegative());
  EXPECT_LE(p.marginal_error(), 1e-8);
}

// Transport LP on a dense cost via brute force over the vertices of the
// assignment polytope, for uniform equal-size marginals.
double brute_uniform(const Matrix& c) { return detail::brute_force_assignment(c) / double(c.rows()); }

}  // namespace

TEST(PermutationCost, Examples) {
  const Grid line(1, 3);
  EXPECT_DOUBLE_EQ(permutation_cost(Permutation::identity(3), line), 0.0);
  EXPECT_DOUBLE_EQ(permutation_cost(Permutation({1, 0, 2}), line), 2.0);
  EXPECT_DOUBLE_EQ(permutation_cost(Permutation({2, 1, 0}), line), 8.0);
  EXPECT_DOUBLE_EQ(permutation_cost(Permutation({2, 1, 0}).matrix(), line), 8.0);
}

TEST(PermutationCost, SoftPlanAndDimensionCheck) {
  const Grid line(1, 2);
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.5, 0.5;
  EXPECT_DOUBLE_EQ(permutation_cost(p, line), 1.0);
  try {
    permutation_cost(Matrix::Identity(3, 3), line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(CostMatrix, DirectEvaluation) {
  const Grid line(1, 2);
  // lambda / (2 beta) = 1
  const CostMatrix c = build_cost_matrix(Signal(line, vec({2, 0})), Signal(line, vec({0, 2})), 2.0, 1.0);
  Matrix expect(2, 2);
  expect << 4, 1, 1, 4;
  EXPECT_TRUE(c.entries().isApprox(expect));
}

TEST(CostMatrix, DiagonalVanishesWhenEqual) {
  const Grid g(3, 3);
  Rng rng(4);
  std::uniform_real_distribution<double> u(0, 3);
  Vector x(9);
  for (Index n = 0; n < 9; ++n) x[n] = u(rng);
  const CostMatrix c = build_cost_matrix(Signal(g, x), Signal(g, x), 5.0, 0.3);
  EXPECT_TRUE(c.entries().diagonal().isZero());
  EXPECT_GE(c.entries().minCoeff(), 0.0);
}

TEST(CostMatrix, ZeroLambdaIsGeometry) {
  const Grid g(2, 3);
  const CostMatrix c = build_cost_matrix(Signal(g, Vector::Ones(6)), Signal::zeros(g), 0.0, 1.0);
  EXPECT_TRUE(c.entries().isApprox(g.squared_distance_matrix()));
}

TEST(Exact, TwoByTwo) {
  const Grid line(1, 2);
  const CostMatrix c = build_cost_matrix(Signal(line, vec({2, 0})), Signal(line, vec({0, 2})), 2.0, 1.0);
  const Marginal u = Marginal::uniform(2, {0, 1});
  const TransportPlan p = solve_exact(c, u, u);
  EXPECT_NEAR(p.value(), 1.0, 1e-12);
  Matrix expect(2, 2);
  expect << 0, 0.5, 0.5, 0;
  EXPECT_TRUE(p.dense().isApprox(expect));
  expect_feasible(p);
}

TEST(Exact, ZeroCost) {
  const Grid g(2, 2);
  const CostMatrix c(g, Matrix::Zero(4, 4), 1.0, 1.0);
  const Marginal u = Marginal::uniform(4, {0, 1, 2, 3});
  const TransportPlan p = solve_exact(c, u, u);
  EXPECT_DOUBLE_EQ(p.value(), 0.0);
  expect_feasible(p);
}

TEST(Exact, IdenticalInputsGiveDiagonal) {
  const Grid g(3, 3);
  Vector x(9);
  for (Index n = 0; n < 9; ++n) x[n] = 0.1 * double(n + 1);
  const CostMatrix c = build_cost_matrix(Signal(g, x), Signal(g, x), 1e-3, 1.0);
  const Marginal u = Marginal::uniform(9, {1, 4, 5, 8});
  const TransportPlan p = solve_exact(c, u, u);
  EXPECT_NEAR(p.value(), 0.0, 1e-15);
  const Matrix d = p.dense();
  EXPECT_NEAR(d.diagonal().sum(), 1.0, 1e-12);
}

TEST(Exact, MatchesBruteForceOnRandomSquares) {
  Rng rng(21);
  std::uniform_real_distribution<double> u(0, 10);
  for (int t = 0; t < 60; ++t) {
    const Index k = 1 + t % 7;
    Matrix c(k, k);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    const Marginal m = Marginal::uniform(k, iota(k));
    const TransportPlan p = solve_exact_block(c, m, m);
    EXPECT_NEAR(p.value(), brute_uniform(c), 1e-9);
    expect_feasible(p);
  }
}

// Rectangular and non-uniform marginals go through the flow solver. A
// non-uniform 2x2 problem has a one-parameter family of couplings; scan it
// finely as the oracle.
TEST(Exact, NonUniformTwoByTwoAgainstScan) {
  Rng rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 30; ++t) {
    const double a = 0.1 + 0.8 * u(rng), b = 0.1 + 0.8 * u(rng);
    Matrix c(2, 2);
    for (Index i = 0; i < 4; ++i) c.data()[i] = 5 * u(rng);
    const Marginal mu(vec({a, 1 - a})), nu(vec({b, 1 - b}));
    const TransportPlan p = solve_exact_block(c, mu, nu);
    // P = [[s, a-s],[b-s, 1-a-b+s]], s in [max(0, a+b-1), min(a, b)].
    double best = std::numeric_limits<double>::infinity();
    const double lo = std::max(0.0, a + b - 1), hi = std::min(a, b);
    for (double s : {lo, hi})  // linear in s: optimum at an end point
      best = std::min(best, c(0, 0) * s + c(0, 1) * (a - s) + c(1, 0) * (b - s) + c(1, 1) * (1 - a - b + s));
    EXPECT_NEAR(p.value(), best, 1e-9);
    expect_feasible(p);
  }
}

TEST(Exact, RectangularUniform) {
  // Three sources, two sinks: each source carries 1/3, each sink receives 1/2.
  Matrix c(3, 2);
  c << 0, 5, 1, 1, 5, 0;
  const Marginal mu = Marginal::uniform(3, {0, 1, 2}), nu = Marginal::uniform(2, {0, 1});
  const TransportPlan p = solve_exact_block(c, mu, nu);
  // Source 1 splits evenly at cost 1.
  EXPECT_NEAR(p.value(), 1.0 / 3.0, 1e-12);
  expect_feasible(p);
}

TEST(Exact, ConstantShiftAddsConstant) {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 20; ++t) {
    Matrix c(5, 4);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    const Marginal mu = Marginal::uniform(5, iota(5)), nu = Marginal::uniform(4, iota(4));
    const double shift = 3.0 * u(rng);
    const double base = solve_exact_block(c, mu, nu).value();
    const Matrix shifted = (c.array() + shift).matrix();
    EXPECT_NEAR(solve_exact_block(shifted, mu, nu).value(), base + shift, 1e-10);
  }
}

TEST(Ipot, TwoByTwo) {
  const Grid line(1, 2);
  const CostMatrix c = build_cost_matrix(Signal(line, vec({2, 0})), Signal(line, vec({0, 2})), 2.0, 1.0);
  const Marginal u = Marginal::uniform(2, {0, 1});
  const TransportPlan p = solve_ipot(c, u, u);
  EXPECT_NEAR(p.value(), 1.0, 1e-3);
  expect_feasible(p);
}

TEST(Ipot, EightByEightAgainstExact) {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 100; ++t) {
    Matrix c(8, 8);
    for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    const Marginal m = Marginal::uniform(8, iota(8));
    const TransportPlan e = solve_exact_block(c, m, m);
    const TransportPlan q = solve_ipot_block(c, m, m);
    EXPECT_LE(std::abs(q.value() - e.value()) / e.value(), 1e-3);
    expect_feasible(q);
  }
}

TEST(Ipot, UnderflowReported) {
  const Grid line(1, 2);
  const CostMatrix c = build_cost_matrix(Signal(line, vec({2, 0})), Signal(line, vec({0, 2})), 2.0, 1.0);
  const Marginal u = Marginal::uniform(2, {0, 1});
  IpotParams p;
  p.prox_weight = 1e-6;
  try {
    solve_ipot(c, u, u, p);
    FAIL() << "expected NumericalUnderflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericalUnderflow);
  }
}

TEST(Ipot, ObjectiveRarelyIncreases) {
  Rng rng(13);
  std::uniform_real_distribution<double> u(0, 1);
  Matrix c(16, 16);
  for (Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  const Marginal m = Marginal::uniform(16, iota(16));
  const TransportPlan q = solve_ipot_block(c, m, m);
  EXPECT_EQ(q.stats().monotonicity_violations, 0);
  EXPECT_GT(q.stats().iterations, 0);
}

TEST(Ipot, RejectsBadParams) {
  IpotParams p;
  p.outer_iters = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(OtDistance, IdenticalSignals) {
  const Grid g(2, 3);
  const Signal x(g, vec({0.9, 0.1, 0.7, 0.0, 0.8, 0.2}));
  const OtResult r = ot_distance(x, x, 0.5, 0.5, 1.0, 1.0, Solver::Exact);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
  const Matrix d = r.plan.dense();
  EXPECT_NEAR(d.diagonal().sum(), 1.0, 1e-12);
}

TEST(OtDistance, PointMasses) {
  const Grid line(1, 2);
  const double eps = 1e-3;
  for (Solver s : {Solver::Exact, Solver::Ipot}) {
    const OtResult r =
        ot_distance(Signal(line, vec({2, eps})), Signal(line, vec({eps, 2})), 1.0, 1.0, 0.7, 1.3, s);
    EXPECT_NEAR(r.value, 1.0, 1e-9);
    EXPECT_NEAR(r.plan.dense()(0, 1), 1.0, 1e-12);
  }
}

TEST(OtDistance, SwappingArgumentsKeepsValue) {
  Rng rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  const Grid g(3, 4);
  for (int t = 0; t < 30; ++t) {
    Vector a(12), b(12);
    for (Index n = 0; n < 12; ++n) {
      a[n] = u(rng);
      b[n] = u(rng);
    }
    const double lambda = 0.2 + u(rng), beta = 0.2 + u(rng);
    const double ta = threshold_for_support(a, 5), tb = threshold_for_support(b, 5);
    const double ab = ot_distance(Signal(g, a), Signal(g, b), ta, tb, lambda, beta, Solver::Exact).value;
    const double ba = ot_distance(Signal(g, b), Signal(g, a), tb, ta, lambda, beta, Solver::Exact).value;
    EXPECT_NEAR(ab, ba, 1e-12);
  }
}

TEST(OtDistance, EmptySupportPropagates) {
  const Grid line(1, 2);
  try {
    ot_distance(Signal(line, vec({0.1, 0.1})), Signal(line, vec({1, 1})), 0.5, 0.5, 1, 1, Solver::Exact);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySupport);
  }
}

TEST(Plan, ApplyMatchesDense) {
  Rng rng(19);
  std::uniform_real_distribution<double> u(0, 1);
  const Grid g(3, 3);
  Vector a(9), b(9);
  for (Index n = 0; n < 9; ++n) {
    a[n] = u(rng);
    b[n] = u(rng);
  }
  const Marginal mu = Marginal::uniform(9, {0, 2, 5, 7}), nu = Marginal::uniform(9, {1, 3, 4, 8});
  const TransportPlan p = transport(g, a, b, mu, nu, 1.0, 1.0, Solver::Ipot);
  const Matrix d = p.dense();
  EXPECT_TRUE((d * b - p.apply(b)).isZero(1e-15));
  EXPECT_TRUE((d.transpose() * a - p.apply_transpose(a)).isZero(1e-15));
  // Entries off the support block are exactly zero.
  for (Index i = 0; i < 9; ++i)
    for (Index j = 0; j < 9; ++j)
      if (mu.weights()[i] == 0 || nu.weights()[j] == 0) EXPECT_EQ(d(i, j), 0.0);
  expect_feasible(p);
}

TEST(Selftest, OracleChecksPass) {
  PlanAudit audit;
  EXPECT_TRUE(check_exact_vs_brute_force(audit, 50, 6).pass);
  EXPECT_TRUE(check_ipot_vs_exact(audit, 20, 32).pass);
  EXPECT_TRUE(check_plan_feasibility(audit).pass);
}
