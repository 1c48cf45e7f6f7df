#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "optree/lp_simplex.hpp"
#include "oracles.hpp"

namespace optree {
namespace {

void expect_certified(const MilpModel& m, const LpSolution& s) {
  ASSERT_EQ(s.status, LpStatus::optimal);
  for (std::size_t j = 0; j < m.num_variables(); ++j) {
    EXPECT_GE(s.values[j], m.variables()[j].lower - 1e-9);
    EXPECT_LE(s.values[j], m.variables()[j].upper + 1e-9);
  }
  for (const auto& row : m.constraints()) {
    const double act = m.activity(row, s.values);
    if (row.sense != Sense::geq) EXPECT_LE(act, row.rhs + 1e-8);
    if (row.sense != Sense::leq) EXPECT_GE(act, row.rhs - 1e-8);
  }
  EXPECT_NEAR(s.objective, m.objective_value(s.values), 1e-9);
}

TEST(Simplex, OneVariable) {
  MilpModel m;
  const auto x = m.add_continuous(0, 10, "x");
  m.add_constraint({{x, 1}}, Sense::geq, 3);
  m.add_objective(x, 1);
  const auto s = solve_lp(m);
  expect_certified(m, s);
  EXPECT_NEAR(s.values[0], 3, 1e-12);
  EXPECT_NEAR(s.objective, 3, 1e-12);
}

TEST(Simplex, BoundActiveOptimum) {
  MilpModel m;
  const auto x = m.add_continuous(-kInf, 2, "x");
  m.add_objective(x, -1);
  const auto s = solve_lp(m);
  expect_certified(m, s);
  EXPECT_NEAR(s.objective, -2, 1e-12);
}

TEST(Simplex, Infeasible) {
  MilpModel m;
  const auto x = m.add_continuous(-kInf, kInf, "x");
  m.add_constraint({{x, 1}}, Sense::leq, 1);
  m.add_constraint({{x, 1}}, Sense::geq, 2);
  EXPECT_EQ(solve_lp(m).status, LpStatus::infeasible);
}

TEST(Simplex, Unbounded) {
  MilpModel m;
  const auto x = m.add_continuous(0, kInf, "x");
  const auto y = m.add_continuous(0, kInf, "y");
  m.add_constraint({{x, 1}, {y, -1}}, Sense::leq, 1);
  m.add_objective(x, -1);
  EXPECT_EQ(solve_lp(m).status, LpStatus::unbounded);
}

TEST(Simplex, FreeVariablesReportedInOriginalSpace) {
  MilpModel m;
  const auto x = m.add_continuous(-kInf, kInf, "x");
  const auto y = m.add_continuous(-kInf, kInf, "y");
  m.add_constraint({{x, 1}, {y, 1}}, Sense::eq, -4);
  m.add_constraint({{x, 1}, {y, -1}}, Sense::eq, 2);
  const auto s = solve_lp(m);
  expect_certified(m, s);
  EXPECT_NEAR(s.values[0], -1, 1e-9);
  EXPECT_NEAR(s.values[1], -3, 1e-9);
}

TEST(Simplex, BealeCyclingInstance) {
  MilpModel m;
  std::vector<VarRef> x;
  for (int j = 0; j < 4; ++j) x.push_back(m.add_continuous(0, kInf, "x" + std::to_string(j + 4)));
  const double c[] = {-0.75, 20, -0.5, 6};
  for (int j = 0; j < 4; ++j) m.add_objective(x[static_cast<std::size_t>(j)], c[j]);
  m.add_constraint({{x[0], 0.25}, {x[1], -8}, {x[2], -1}, {x[3], 9}}, Sense::leq, 0);
  m.add_constraint({{x[0], 0.5}, {x[1], -12}, {x[2], -0.5}, {x[3], 3}}, Sense::leq, 0);
  m.add_constraint({{x[2], 1}}, Sense::leq, 1);
  const auto s = solve_lp(m);
  expect_certified(m, s);
  EXPECT_NEAR(s.objective, -1.25, 1e-9);
}

TEST(Simplex, MarshallSuurballeCyclingInstance) {
  MilpModel m;
  std::vector<VarRef> x;
  for (int j = 0; j < 4; ++j) x.push_back(m.add_continuous(0, kInf, "x" + std::to_string(j + 1)));
  const double c[] = {-2, -3, 1, 12};
  for (int j = 0; j < 4; ++j) m.add_objective(x[static_cast<std::size_t>(j)], c[j]);
  m.add_constraint({{x[0], -2}, {x[1], -9}, {x[2], 1}, {x[3], 9}}, Sense::leq, 0);
  m.add_constraint({{x[0], 1.0 / 3}, {x[1], 1}, {x[2], -1.0 / 3}, {x[3], -2}}, Sense::leq, 0);
  m.add_constraint({{x[0], 2}, {x[1], 3}, {x[2], -1}, {x[3], -12}}, Sense::leq, 2);
  const auto s = solve_lp(m);
  expect_certified(m, s);
  EXPECT_NEAR(s.objective, -2, 1e-9);
}

TEST(Simplex, BlandFallbackStillOptimal) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = oracle::random_lp(rng, 6, 6);
    SimplexSolver eager(m, {.degenerate_limit = 0});
    const auto a = eager.solve();
    const auto b = solve_lp(m);
    ASSERT_EQ(a.status, b.status);
    if (a.status == LpStatus::optimal) EXPECT_NEAR(a.objective, b.objective, 1e-7);
  }
}

TEST(Simplex, MatchesVertexEnumeration) {
  std::mt19937_64 rng(1234);
  std::uniform_int_distribution<int> size(1, 8);
  int optimal = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_lp(rng, static_cast<std::size_t>(size(rng)), static_cast<std::size_t>(size(rng)));
    const auto s = solve_lp(m);
    const auto ref = oracle::vertex_enumeration(oracle::to_dense(m));
    ASSERT_EQ(s.status == LpStatus::optimal, ref.feasible) << "trial " << trial;
    if (ref.feasible) {
      ++optimal;
      expect_certified(m, s);
      EXPECT_NEAR(s.objective, ref.objective, 1e-6 * std::max(1.0, std::abs(ref.objective))) << "trial " << trial;
    }
  }
  EXPECT_GT(optimal, 10);
}

TEST(Simplex, TighteningBoundsIsMonotone) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto m = oracle::random_lp(rng, 6, 5);
    SimplexSolver solver(m);
    auto prev = solver.solve();
    for (int step = 0; step < 6 && prev.status == LpStatus::optimal; ++step) {
      const std::size_t j = static_cast<std::size_t>(trial + step) % m.num_variables();
      const double lo = solver.lower(j);
      const double hi = solver.upper(j);
      const double cut = lo + (hi - lo) * u(rng);
      if (step % 2 == 0) {
        solver.set_bound(j, cut, hi);
      } else {
        solver.set_bound(j, lo, cut);
      }
      const auto next = solver.solve();
      if (next.status != LpStatus::optimal) break;
      EXPECT_GE(next.objective, prev.objective - 1e-9);
      // Warm solve agrees with a cold solve of the same restriction.
      BoundOverrides ov;
      for (std::size_t k = 0; k < m.num_variables(); ++k) ov[static_cast<std::uint32_t>(k)] = {solver.lower(k), solver.upper(k)};
      EXPECT_NEAR(solve_lp(m, ov).objective, next.objective, 1e-7);
      prev = next;
    }
  }
}

TEST(Simplex, ResetBoundsRestoresOriginal) {
  MilpModel m;
  const auto x = m.add_continuous(0, 10, "x");
  m.add_objective(x, 1);
  SimplexSolver s(m);
  s.set_bound(0, 4, 10);
  EXPECT_NEAR(s.solve().objective, 4, 1e-12);
  s.reset_bounds();
  EXPECT_NEAR(s.solve().objective, 0, 1e-12);
}

TEST(Simplex, InvertedOverrideIsInfeasible) {
  MilpModel m;
  m.add_continuous(0, 10, "x");
  EXPECT_EQ(solve_lp(m, {{0, {5, 4}}}).status, LpStatus::infeasible);
}

}  // namespace
}  // namespace optree
