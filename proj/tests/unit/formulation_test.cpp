#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "optree/error.hpp"
#include "optree/formulation.hpp"
#include "synthetic.hpp"

namespace optree {
namespace {

FormulationSpec spec_for(const Dataset& d, unsigned depth, unsigned splits, double c = 1.0) {
  FormulationSpec s;
  s.depth = depth;
  s.max_splits = splits;
  s.c = c;
  s.roles = default_roles(d);
  return s;
}

TrainResult train(const Dataset& d, const FormulationSpec& s, double time_limit = 60) {
  TrainOptions o;
  o.spec = s;
  o.time_limit = time_limit;
  return train_tree(d, synth::identity_preprocess(d.cols, d.task, synth::labels_for(d.task, d.classes)), o);
}

double accuracy_on(const ModelTree& t, const Dataset& d) {
  int hit = 0;
  for (std::size_t i = 0; i < d.rows; ++i) hit += t.predict_standardized(d.row(i)).class_index == d.label[i];
  return static_cast<double>(hit) / static_cast<double>(d.rows);
}

Dataset random_regression(std::mt19937_64& rng, std::size_t n, std::size_t cols) {
  std::normal_distribution<double> g;
  const auto x = synth::grid_points(rng, n, cols);
  std::vector<double> y;
  for (const auto& row : x) y.push_back(row[0] > 0 ? 2 * row[0] + 0.1 * g(rng) : -row[cols - 1] + 0.1 * g(rng));
  return synth::regression(x, y);
}

TEST(Formulation, BinaryVariableCountUnivariate) {
  std::mt19937_64 rng(1);
  const auto d = random_regression(rng, 10, 3);
  const auto f = build_ormt(d, spec_for(d, 2, 3));
  EXPECT_EQ(f.model.num_binaries(), 3u + 9u + 40u + 4u);
  EXPECT_EQ(f.layout.d.size(), 3u);
  EXPECT_EQ(f.layout.z.size(), 10u);
  EXPECT_EQ(f.layout.l.size(), 4u);
}

TEST(Formulation, MulticlassEpsCount) {
  std::mt19937_64 rng(2);
  const auto x = synth::grid_points(rng, 10, 2);
  std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 2, 0};
  const auto d = synth::classification(x, y, 3);
  const auto f = build_ocmt_multiclass(d, spec_for(d, 2, 3));
  std::size_t eps = 0;
  for (const auto& leaf : f.layout.eps) {
    for (const auto& point : leaf) {
      for (const auto& e : point) eps += e.has_value();
    }
  }
  EXPECT_EQ(eps, 80u);
}

TEST(Formulation, MultivariateAddsIndicatorsAndAbsAuxiliaries) {
  std::mt19937_64 rng(3);
  const auto d = random_regression(rng, 6, 3);
  auto s = spec_for(d, 1, 1);
  const auto uni = build_ormt(d, s);
  s.multivariate = true;
  const auto multi = build_ormt(d, s);
  EXPECT_EQ(multi.layout.s[0].size(), 3u);
  EXPECT_EQ(multi.layout.a_abs[0].size(), 3u);
  // a turns continuous, s adds the same number of binaries, plus 3 |a| auxiliaries.
  EXPECT_EQ(multi.model.num_binaries(), uni.model.num_binaries());
  EXPECT_EQ(multi.model.num_variables(), uni.model.num_variables() + 6u);
  EXPECT_EQ(multi.model.variable(multi.layout.a[0][0]).kind, VarKind::continuous);
}

TEST(Formulation, RejectsBadSpecs) {
  std::mt19937_64 rng(4);
  const auto d = random_regression(rng, 6, 2);
  EXPECT_THROW(build_ormt(d, spec_for(d, 1, 2)), ModelError);
  EXPECT_THROW(build_ormt(d, spec_for(d, 1, 1, 0.0)), ModelError);
  EXPECT_THROW(build_ocmt_binary(d, spec_for(d, 1, 1)), ModelError);
  const auto c = synth::classification({{0}, {1}}, {0, 1}, 2);
  EXPECT_THROW(build_ocmt_multiclass(c, spec_for(c, 0, 0)), ModelError);
  Dataset empty = synth::regression({}, {});
  empty.cols = 1;
  auto s = spec_for(d, 0, 0);
  EXPECT_THROW(build_ormt(empty, s), ModelError);
}

TEST(Formulation, ConstantFeaturesAreNotSplitEligible) {
  const auto d = synth::regression({{1, 0}, {1, 1}, {1, 2}}, {0, 1, 2});
  const auto f = build_ormt(d, spec_for(d, 1, 1));
  EXPECT_EQ(f.layout.split_features, (std::vector<std::size_t>{1}));
  EXPECT_EQ(f.layout.leaf_features, (std::vector<std::size_t>{0, 1}));
}

TEST(Formulation, DepthZeroFixesAssignment) {
  const auto d = synth::regression({{0}, {1}, {2}}, {1, 3, 5});
  const auto f = build_ormt(d, spec_for(d, 0, 0));
  for (const auto& row : f.layout.z) EXPECT_EQ(f.model.variable(row[0]).lower, 1.0);
  const auto r = train(d, spec_for(d, 0, 0, 10.0));
  ASSERT_EQ(r.outcome.status, SolveStatus::optimal);
  // y = 2x + 1 fits exactly; |beta| = 2 is cheaper than any residual at C = 10.
  EXPECT_NEAR(r.outcome.objective, 2.0, 1e-7);
  EXPECT_NEAR(r.tree->leaves[0].weights[0][0], 2.0, 1e-7);
}

TEST(Formulation, NoSplitBudgetRoutesRight) {
  std::mt19937_64 rng(5);
  const auto d = random_regression(rng, 8, 2);
  const auto r = train(d, spec_for(d, 1, 0));
  ASSERT_EQ(r.outcome.status, SolveStatus::optimal);
  EXPECT_EQ(r.tree->count_leaves(), 1u);
  for (std::size_t i = 0; i < d.rows; ++i) EXPECT_EQ(r.tree->route(d.row(i)), 3u);
}

TEST(Formulation, BinaryTwoPointSvm) {
  const auto d = synth::classification({{-1}, {1}}, {0, 1}, 2);
  const auto r = train(d, spec_for(d, 0, 0));
  ASSERT_EQ(r.outcome.status, SolveStatus::optimal);
  EXPECT_NEAR(r.outcome.objective, 1.0, 1e-9);
  EXPECT_NEAR(r.tree->leaves[0].weights[0][0], 1.0, 1e-9);
  EXPECT_NEAR(r.tree->leaves[0].intercepts[0], 0.0, 1e-9);
}

TEST(Formulation, SinglePointIsFreeToSeparate) {
  const auto d = synth::classification({{0.3}}, {1}, 2);
  const auto r = train(d, spec_for(d, 0, 0));
  ASSERT_EQ(r.outcome.status, SolveStatus::optimal);
  EXPECT_NEAR(r.outcome.objective, 0.0, 1e-9);
}

TEST(Formulation, OneDimensionalXorNeedsOneSplit) {
  const auto d = synth::classification({{-1}, {0}, {1}}, {1, 0, 1}, 2);
  // At C = 1 the single leaf ties with the split tree.
  const auto r = train(d, spec_for(d, 1, 1, 10.0));
  ASSERT_EQ(r.outcome.status, SolveStatus::optimal);
  EXPECT_EQ(r.tree->count_leaves(), 2u);
  EXPECT_DOUBLE_EQ(accuracy_on(*r.tree, d), 1.0);
}

TEST(Formulation, MulticlassThreePoints) {
  const auto d = synth::classification({{-1}, {0}, {1}}, {0, 1, 2}, 3);
  const auto r = train(d, spec_for(d, 0, 0, 10.0));
  ASSERT_EQ(r.outcome.status, SolveStatus::optimal);
  EXPECT_DOUBLE_EQ(accuracy_on(*r.tree, d), 1.0);
}

void expect_consistent(const Formulation& f, const Dataset& d, const TrainResult& r) {
  ASSERT_TRUE(r.tree.has_value());
  const auto& x = *r.outcome.assignment;
  const auto& t = *r.tree;
  EXPECT_NEAR(training_objective(t, d, f.spec.c), r.outcome.objective, 1e-5 * std::max(1.0, r.outcome.objective));
  EXPECT_LE(t.count_leaves(), f.spec.max_splits + 1u);
  for (std::size_t i = 0; i < d.rows; ++i) {
    std::size_t assigned = 0;
    NodeId leaf = 0;
    for (const auto n : f.topology.leaf_nodes()) {
      if (x[f.layout.z[i][f.topology.leaf_index(n)].index] > 0.5) {
        ++assigned;
        leaf = n;
      }
    }
    EXPECT_EQ(assigned, 1u);
    EXPECT_EQ(t.route(d.row(i)), leaf) << "point " << i;
  }
  for (const auto n : f.topology.branch_nodes()) {
    if (n == 1) continue;
    EXPECT_LE(x[f.layout.d[n - 1].index], x[f.layout.d[n / 2 - 1].index] + 1e-9);
  }
}

TEST(Formulation, ExtractionAgreesWithSolution) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 3; ++trial) {
    const auto d = random_regression(rng, 12, 2);
    for (bool multi : {false, true}) {
      auto s = spec_for(d, 2, 3);
      s.multivariate = multi;
      const auto f = build_ormt(d, s);
      const auto r = train(d, s, 5);
      ASSERT_TRUE(r.outcome.assignment.has_value());
      expect_consistent(f, d, r);
      r.tree->validate();
    }
  }
}

TEST(Formulation, CompletedStructuresAreFeasible) {
  std::mt19937_64 rng(7);
  const auto d = random_regression(rng, 15, 3);
  const auto f = build_ormt(d, spec_for(d, 2, 3));
  auto heuristic = make_tree_heuristic(f, d);
  const std::vector<double> lp(f.model.num_variables(), 0.0);
  const auto candidates = heuristic(lp);
  ASSERT_FALSE(candidates.empty());
  for (const auto& c : candidates) EXPECT_TRUE(check_feasible(f.model, c, 1e-6).feasible);
}

TEST(Formulation, TreeRoundTripsThroughAssignment) {
  std::mt19937_64 rng(8);
  const auto d = random_regression(rng, 14, 2);
  const auto s = spec_for(d, 2, 2);
  const auto f = build_ormt(d, s);
  const auto r = train(d, s, 20);
  ASSERT_TRUE(r.tree.has_value());
  const auto x = assignment_from_tree(f, d, *r.tree);
  ASSERT_TRUE(x.has_value());
  EXPECT_TRUE(check_feasible(f.model, *x, 1e-6).feasible);
  EXPECT_LE(f.model.objective_value(*x), r.outcome.objective + 1e-6);
}

TEST(Formulation, MoreSplitsNeverHurt) {
  std::mt19937_64 rng(9);
  const auto d = random_regression(rng, 10, 2);
  double prev = kInf;
  for (unsigned s = 0; s <= 3; ++s) {
    const auto r = train(d, spec_for(d, 2, s), 60);
    ASSERT_EQ(r.outcome.status, SolveStatus::optimal) << "S = " << s;
    EXPECT_LE(r.outcome.objective, prev + 1e-6);
    prev = r.outcome.objective;
  }
}

TEST(Formulation, MetaFeatureRoles) {
  std::mt19937_64 rng(10);
  const auto d = random_regression(rng, 12, 3);
  auto s = spec_for(d, 1, 1);
  s.roles.split = {0};
  s.roles.leaf = {1, 2};
  const auto r = train(d, s);
  ASSERT_TRUE(r.tree.has_value());
  EXPECT_EQ(r.tree->leaf_features, (std::vector<std::size_t>{1, 2}));
  for (const auto& rule : r.tree->splits) {
    if (rule.kind == SplitRule::Kind::univariate) EXPECT_EQ(rule.feature, 0u);
  }
  for (const auto& leaf : r.tree->leaves) EXPECT_EQ(leaf.weights[0].size(), 2u);
}

TEST(Formulation, TrainingObjectiveByHand) {
  auto t = ModelTree{};
  t.depth = 0;
  t.num_features = 1;
  t.leaf_features = {0};
  t.splits = {};
  t.leaves = {LeafModel{{{0.0}}, {1.0}}};
  const auto d = synth::regression({{0}, {5}}, {0, 3});
  EXPECT_DOUBLE_EQ(training_objective(t, d, 2.0), 2.0 * (1.0 + 2.0));
}

}  // namespace
}  // namespace optree
