#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "hte/error.hpp"
#include "hte/shapley.hpp"
#include "test_support.hpp"

namespace hte::shapley {
namespace {

using gbtree::Ensemble;
using gbtree::Node;
using gbtree::Tree;

Tree stump(int feature, double threshold, double left, double left_cover, double right,
           double right_cover) {
  Tree t;
  t.nodes.push_back(Node{feature, threshold, 1, 2, 0.0, left_cover + right_cover});
  t.nodes.push_back(Node{-1, 0.0, -1, -1, left, left_cover});
  t.nodes.push_back(Node{-1, 0.0, -1, -1, right, right_cover});
  return t;
}

Ensemble model_of(std::vector<Tree> trees, std::size_t features, double base = 0.0) {
  Ensemble m;
  m.base_score = base;
  m.trees = std::move(trees);
  m.feature_names = testing::feature_names(features);
  return m;
}

std::vector<double> random_row(std::size_t n, Rng& rng) {
  std::normal_distribution<double> dist;
  std::vector<double> row(n);
  for (auto& v : row) v = dist(rng);
  return row;
}

TEST(TreeShap, ConstantModel) {
  const auto m = model_of({}, 3, 1.5);
  const std::vector<double> x = {1, 2, 3};
  const auto row = tree_shap(m, x);
  EXPECT_EQ(row.phi, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(row.base_value, 1.5);
}

TEST(TreeShap, StumpHandComputed) {
  // Leaves +2 (cover 1) and -2 (cover 3); the instance goes left.
  const auto m = model_of({stump(0, 0.5, 2.0, 1, -2.0, 3)}, 2);
  const std::vector<double> x = {0.0, 7.0};
  for (const auto& row : {tree_shap(m, x), brute_force_shap(m, x)}) {
    EXPECT_DOUBLE_EQ(row.base_value, -1.0);
    EXPECT_DOUBLE_EQ(row.phi[0], 3.0);
    EXPECT_EQ(row.phi[1], 0.0);
  }
}

TEST(TreeShap, TwoStumpsDecomposeAdditively) {
  const auto a = stump(0, 0.0, 1.0, 2, -1.0, 2);
  const auto b = stump(1, 1.0, 0.5, 1, -3.0, 3);
  const auto both = model_of({a, b}, 2);
  const std::vector<double> x = {0.5, -2.0};
  const auto full = brute_force_shap(both, x);
  const auto only_a = brute_force_shap(model_of({a}, 2), x);
  const auto only_b = brute_force_shap(model_of({b}, 2), x);
  EXPECT_NEAR(full.phi[0], only_a.phi[0], 1e-15);
  EXPECT_NEAR(full.phi[1], only_b.phi[1], 1e-15);
  const auto fast = tree_shap(both, x);
  EXPECT_NEAR(fast.phi[0], full.phi[0], 1e-12);
  EXPECT_NEAR(fast.phi[1], full.phi[1], 1e-12);
}

TEST(BruteForce, SingleFeatureGetsWholeDeviation) {
  auto rng = make_rng(1, "single");
  const auto m = testing::random_ensemble(1, 3, 3, rng);
  const std::vector<double> x = {0.3};
  const auto row = brute_force_shap(m, x);
  EXPECT_NEAR(row.phi[0], m.predict_row(x) - row.base_value, 1e-12);
}

TEST(BruteForce, RefusesWideModels) {
  const auto m = model_of({}, 16);
  const std::vector<double> x(16, 0.0);
  try {
    brute_force_shap(m, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooManyFeatures);
  }
}

TEST(TreeShap, AgreesWithBruteForceOnRandomEnsembles) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto rng = make_rng(seed, "oracle");
    const auto m = testing::random_ensemble(5, 3, 3, rng);
    const auto x = random_row(5, rng);
    const auto fast = tree_shap(m, x);
    const auto slow = brute_force_shap(m, x);
    EXPECT_NEAR(fast.base_value, slow.base_value, 1e-12);
    for (std::size_t i = 0; i < 5; ++i) ASSERT_NEAR(fast.phi[i], slow.phi[i], 1e-8) << seed;
  }
}

TEST(TreeShap, LocalAccuracy) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_rng(seed, "local");
    const auto m = testing::random_ensemble(6, 8, 5, rng);
    for (int i = 0; i < 50; ++i) {
      const auto x = random_row(6, rng);
      const auto row = tree_shap(m, x);
      const double total = std::accumulate(row.phi.begin(), row.phi.end(), row.base_value);
      ASSERT_NEAR(total, m.predict_row(x), 1e-9);
    }
  }
}

TEST(TreeShap, DummyFeatureGetsExactZero) {
  auto rng = make_rng(2, "dummy");
  auto m = testing::random_ensemble(3, 4, 3, rng);
  m.feature_names.push_back("unused");
  for (int i = 0; i < 20; ++i) {
    const auto x = random_row(4, rng);
    EXPECT_EQ(tree_shap(m, x).phi[3], 0.0);
  }
}

TEST(TreeShap, DuplicatedColumnsSplitIdenticallyShareCredit) {
  const auto m = model_of({stump(0, 0.2, 1.0, 3, -1.0, 5), stump(1, 0.2, 1.0, 3, -1.0, 5)}, 2);
  auto rng = make_rng(3, "symmetry");
  for (int i = 0; i < 20; ++i) {
    const double v = random_row(1, rng)[0];
    const std::vector<double> x = {v, v};
    const auto row = tree_shap(m, x);
    EXPECT_EQ(row.phi[0], row.phi[1]);
  }
}

TEST(TreeShap, AdditiveAcrossTrees) {
  auto rng = make_rng(4, "additive");
  const auto m = testing::random_ensemble(4, 5, 4, rng);
  const auto x = random_row(4, rng);
  const auto full = tree_shap(m, x);
  std::vector<double> sum(4, 0.0);
  for (const auto& tree : m.trees) {
    const auto part = tree_shap(model_of({tree}, 4), x);
    for (std::size_t i = 0; i < 4; ++i) sum[i] += part.phi[i];
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(full.phi[i], sum[i], 1e-12);
}

TEST(TreeShap, MatrixOverloadMatchesRowsAndThreads) {
  auto rng = make_rng(5, "matrix");
  const auto m = testing::random_ensemble(4, 6, 4, rng);
  const auto x = testing::random_matrix(40, 4, rng);
  const auto one = tree_shap(m, x, 1);
  const auto four = tree_shap(m, x, 4);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    EXPECT_EQ(one[r].phi, four[r].phi);
    EXPECT_EQ(one[r].phi, tree_shap(m, x.row(r)).phi);
  }
}

TEST(TreeShap, MissingCoversAndFeatureMismatch) {
  auto t = stump(0, 0.0, 1.0, 1, -1.0, 1);
  t.nodes[1].cover = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> x = {0.0};
  try {
    tree_shap(model_of({t}, 1), x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingCovers);
  }
  const std::vector<double> wide = {0.0, 1.0};
  try {
    tree_shap(model_of({}, 1), wide);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFeatureMismatch);
  }
}

TEST(TreeShap, AttributionsSumToZeroOverTrainingRows) {
  // With training covers the base value is the mean training prediction,
  // so the per-row attribution totals cancel across the training set.
  auto rng = make_rng(6, "center");
  const auto x = testing::random_matrix(200, 3, rng);
  std::vector<double> y(200);
  for (std::size_t r = 0; r < 200; ++r) y[r] = x(r, 0) * x(r, 1) + std::abs(x(r, 2));
  gbtree::Hyperparams hp;
  hp.max_depth = 4;
  hp.n_trees = 20;
  const auto model = gbtree::train(x, y, hp);
  const auto phis = tree_shap(model, x);
  double total = 0.0;
  for (const auto& row : phis) {
    for (const double p : row.phi) total += p;
  }
  EXPECT_NEAR(total / 200.0, 0.0, 1e-9);
  const std::vector<std::string> one_class(200, "all"), classes = {"all"};
  const auto summary = category_summary(phis, x.origin(), "f0", one_class, classes);
  double f0 = 0.0;
  for (const auto& row : phis) f0 += row.phi[0];
  EXPECT_NEAR(*summary[0].mean_phi, f0 / 200.0, 1e-12);
}

TEST(Importance, MeanAndPopulationSdOfAbsolutePhi) {
  std::vector<ShapleyRow> phis = {{{1.0, 0.0}, 0.0}, {{-1.0, 0.0}, 0.0}};
  const std::vector<std::string> origin = {"a", "b"};
  const auto table = importance_table(phis, origin);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0].feature, "a");
  EXPECT_EQ(table.rows[0].mean_abs_phi, 1.0);
  EXPECT_EQ(table.rows[0].sd_abs_phi, 0.0);
  EXPECT_EQ(table.rows[1].mean_abs_phi, 0.0);
  EXPECT_EQ(*table.rank_of("b"), 1u);
  EXPECT_THROW(importance_table(std::vector<ShapleyRow>{}, origin), Error);
}

TEST(Importance, OneHotMembersSummedBeforeAbsoluteValue) {
  // Two indicator columns of one source with opposite-signed phi.
  std::vector<ShapleyRow> phis = {{{0.5, -0.2, 0.1}, 0.0}, {{-0.3, 0.4, -0.1}, 0.0}};
  const std::vector<std::string> origin = {"race", "race", "effort"};
  const auto table = importance_table(phis, origin);
  EXPECT_NEAR(table.find("race")->mean_abs_phi, (0.3 + 0.1) / 2, 1e-15);
  EXPECT_NEAR(table.find("race")->sd_abs_phi, 0.1, 1e-15);
  EXPECT_NEAR(table.find("effort")->mean_abs_phi, 0.1, 1e-15);
}

TEST(Importance, OneHotEqualsDirectCategoricalModel) {
  // Direct model: stump on a 0/1 code. One-hot model: the same split on the
  // indicator of category B, with the A indicator unused.
  const auto direct = model_of({stump(0, 0.5, 1.0, 3, -2.0, 1)}, 1);
  auto onehot = model_of({stump(1, 0.5, 1.0, 3, -2.0, 1)}, 2);
  const FeatureMatrix codes(4, {"f0"}, {0, 0, 0, 1});
  const FeatureMatrix indicators(4, {"g=A", "g=B"}, {"g", "g"}, {"A", "B"},
                                 {1, 0, 1, 0, 1, 0, 0, 1});
  onehot.feature_names = indicators.names();
  const std::vector<std::string> direct_origin = {"g"};
  const auto a = importance_table(tree_shap(direct, codes), direct_origin);
  const auto b = importance_table(tree_shap(onehot, indicators), indicators.origin());
  EXPECT_DOUBLE_EQ(a.rows[0].mean_abs_phi, b.rows[0].mean_abs_phi);
  EXPECT_DOUBLE_EQ(a.rows[0].sd_abs_phi, b.rows[0].sd_abs_phi);
}

TEST(Importance, InvariantUnderInstanceOrder) {
  auto rng = make_rng(7, "order");
  const auto m = testing::random_ensemble(3, 4, 3, rng);
  const auto x = testing::random_matrix(30, 3, rng);
  auto phis = tree_shap(m, x);
  const auto a = importance_table(phis, x.origin());
  std::reverse(phis.begin(), phis.end());
  const auto b = importance_table(phis, x.origin());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].feature, b.rows[i].feature);
    EXPECT_NEAR(a.rows[i].mean_abs_phi, b.rows[i].mean_abs_phi, 1e-15);
  }
}

TEST(Dependence, StumpHasTwoPhiLevels) {
  const auto m = model_of({stump(0, 0.5, 2.0, 1, -2.0, 3)}, 2);
  const FeatureMatrix x(4, {"f0", "f1"}, {0, 1, 0, 2, 1, 3, 1, 4});
  const auto phis = tree_shap(m, x);
  const auto table = dependence_table(phis, "f0", x);
  ASSERT_EQ(table.rows.size(), 4u);
  std::set<double> levels;
  for (const auto& row : table.rows) levels.insert(row.phi);
  EXPECT_EQ(levels, (std::set<double>{3.0, -1.0}));
  EXPECT_EQ(std::get<double>(table.rows[2].feature_value), 1.0);
  EXPECT_THROW(dependence_table(phis, "nope", x), Error);

  const std::vector<std::string> side = {"left", "left", "right", "right"};
  const std::vector<std::string> classes = {"left", "right", "empty"};
  const auto summary = category_summary(phis, x.origin(), "f0", side, classes);
  EXPECT_EQ(*summary[0].mean_phi, 3.0);
  EXPECT_EQ(*summary[1].mean_phi, -1.0);
  EXPECT_EQ(summary[2].n, 0u);
  EXPECT_FALSE(summary[2].mean_phi.has_value());
}

TEST(Dependence, CategoricalValuesUseLabels) {
  const auto m = model_of({}, 2);
  const FeatureMatrix x(2, {"g=A", "g=B"}, {"g", "g"}, {"A", "B"}, {1, 0, 0, 1});
  auto model = m;
  model.feature_names = x.names();
  const auto table = dependence_table(tree_shap(model, x), "g", x);
  EXPECT_EQ(std::get<std::string>(table.rows[1].feature_value), "B");
  EXPECT_EQ(table.rows[1].phi, 0.0);
}

TEST(Csv, ExportHeaders) {
  std::vector<ShapleyRow> phis = {{{1.0, 0.5}, 0.25}};
  const std::vector<std::string> origin = {"a", "b"};
  EXPECT_EQ(importance_csv(importance_table(phis, origin)).substr(0, 30),
            std::string("feature,mean_abs_phi,sd_abs_ph"));
  EXPECT_EQ(shap_matrix_csv(phis, origin), "a,b,base_value\n1,0.5,0.25\n");
}

}  // namespace
}  // namespace hte::shapley
