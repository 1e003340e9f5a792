#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hte/error.hpp"
#include "hte/gbtree.hpp"
#include "hte/random.hpp"
#include "hte/tuning.hpp"
#include "test_support.hpp"

namespace hte::gbtree {
namespace {

FeatureMatrix column(std::vector<double> x) {
  const std::size_t n = x.size();
  return FeatureMatrix(n, {"x"}, std::move(x));
}

Hyperparams exact_hp() {
  Hyperparams hp;
  hp.max_depth = 1;
  hp.eta = 1.0;
  hp.lambda = 0.0;
  hp.gamma = 0.0;
  hp.n_trees = 1;
  return hp;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

TEST(SplitGain, HandComputedValues) {
  EXPECT_DOUBLE_EQ(split_gain(-4, 2, 4, 2, 0, 0), 8.0);
  EXPECT_DOUBLE_EQ(split_gain(0, 5, 0, 5, 3.0, 0.5), -0.5);
  EXPECT_DOUBLE_EQ(split_gain(-4, 2, 4, 2, 0, 8), 0.0);
  EXPECT_DOUBLE_EQ(split_gain(0, 0, 0, 0, 0, 0.25), -0.25);
}

TEST(FitTree, StumpLeavesAreNegativeGradientMeans) {
  const auto x = column({0, 0, 1, 1});
  const std::vector<double> g = {-1, -1, 2, 2}, h = {1, 1, 1, 1};
  const std::vector<std::size_t> cols = {0};
  auto hp = exact_hp();
  hp.max_depth = 3;
  const auto tree = fit_tree(x, g, h, all_rows(4), cols, hp);
  ASSERT_EQ(tree.nodes.size(), 3u);
  const auto& root = tree.nodes[0];
  EXPECT_EQ(root.feature, 0);
  EXPECT_EQ(root.threshold, 0.5);
  EXPECT_EQ(tree.nodes[root.left].value, 1.0);
  EXPECT_EQ(tree.nodes[root.right].value, -2.0);
  EXPECT_EQ(root.cover, 4.0);
  EXPECT_EQ(tree.nodes[root.left].cover, 2.0);
}

TEST(FitTree, ZeroGradientsGiveZeroLeaf) {
  const auto x = column({0, 0, 1, 1});
  const std::vector<double> g(4, 0.0), h(4, 1.0);
  const std::vector<std::size_t> cols = {0};
  const auto tree = fit_tree(x, g, h, all_rows(4), cols, exact_hp());
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].value, 0.0);
}

TEST(FitTree, MinLeafBlocksEverySplit) {
  const auto x = column({0, 0, 1, 1});
  const std::vector<double> g = {-1, -1, 2, 2}, h(4, 1.0);
  const std::vector<std::size_t> cols = {0};
  auto hp = exact_hp();
  hp.min_leaf = 3;
  const auto tree = fit_tree(x, g, h, all_rows(4), cols, hp);
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].value, -0.5);  // -(2) / (4 + 0)
}

TEST(FitTree, EmptyNodeIsAnError) {
  const auto x = column({0, 1});
  const std::vector<double> g = {0, 0}, h = {1, 1};
  const std::vector<std::size_t> none, cols = {0};
  EXPECT_THROW(fit_tree(x, g, h, none, cols, exact_hp()), Error);
}

TEST(FitTree, TiesPreferLowestColumn) {
  // Two identical columns: the split must use column 0.
  const FeatureMatrix x(4, {"a", "b"}, {0, 0, 0, 0, 1, 1, 1, 1});
  const std::vector<double> g = {-1, -1, 1, 1}, h(4, 1.0);
  const std::vector<std::size_t> cols = {1, 0};
  const auto tree = fit_tree(x, g, h, all_rows(4), cols, exact_hp());
  EXPECT_EQ(tree.nodes[0].feature, 0);
}

TEST(Train, HandComputedStump) {
  const auto x = column({0, 0, 1, 1});
  const std::vector<double> y = {0, 0, 10, 10};
  const auto model = train(x, y, exact_hp());
  EXPECT_EQ(model.base_score, 5.0);
  ASSERT_EQ(model.trees.size(), 1u);
  const auto& t = model.trees[0];
  EXPECT_EQ(t.nodes[t.nodes[0].left].value, -5.0);
  EXPECT_EQ(t.nodes[t.nodes[0].right].value, 5.0);
  EXPECT_EQ(predict(model, x), (std::vector<double>{0, 0, 10, 10}));
  EXPECT_EQ(predict(model, column({0, 1})), (std::vector<double>{0, 10}));
}

TEST(Train, ZeroTreesAndConstantTargets) {
  const auto x = column({0, 1, 2});
  auto hp = exact_hp();
  hp.n_trees = 0;
  EXPECT_EQ(predict(train(x, std::vector<double>{1, 2, 6}, hp), x),
            (std::vector<double>{3, 3, 3}));
  hp.n_trees = 5;
  const auto flat = train(x, std::vector<double>{2.5, 2.5, 2.5}, hp);
  for (const auto& tree : flat.trees) {
    ASSERT_EQ(tree.nodes.size(), 1u);
    EXPECT_EQ(tree.nodes[0].value, 0.0);
  }
  EXPECT_EQ(predict(flat, x), (std::vector<double>{2.5, 2.5, 2.5}));
}

TEST(Train, RejectsBadInputs) {
  const auto x = column({0, 1});
  EXPECT_THROW(train(x, std::vector<double>{1}, exact_hp()), Error);
  EXPECT_THROW(train(FeatureMatrix(0, {"x"}, {}), std::vector<double>{}, exact_hp()), Error);
  auto hp = exact_hp();
  hp.subsample = 0.0;
  EXPECT_THROW(train(x, std::vector<double>{1, 2}, hp), Error);
  hp = exact_hp();
  hp.n_trees = 501;
  EXPECT_THROW(hp.validate(), Error);
}

TEST(Predict, FeatureMismatch) {
  const auto model = train(column({0, 1}), std::vector<double>{0, 1}, exact_hp());
  try {
    predict(model, FeatureMatrix(1, {"z"}, {0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFeatureMismatch);
  }
}

TEST(TrainProperties, TrainingRmseNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = make_rng(seed, "monotone");
    const auto x = testing::random_matrix(60, 4, rng);
    std::normal_distribution<double> noise;
    std::vector<double> y(60);
    for (std::size_t r = 0; r < 60; ++r) y[r] = std::sin(3 * x(r, 0)) + x(r, 1) * x(r, 2) + noise(rng);
    Hyperparams hp;
    hp.max_depth = 3;
    hp.n_trees = 40;
    hp.eta = 0.3;
    hp.seed = seed;
    const auto curve = tuning::staged_rmse(train(x, y, hp), x, y);
    for (std::size_t t = 1; t < curve.size(); ++t) ASSERT_LE(curve[t], curve[t - 1] + 1e-12);
  }
}

TEST(TrainProperties, InterpolatesNoiselessDistinctRows) {
  auto rng = make_rng(1, "interpolate");
  const auto x = testing::random_matrix(32, 3, rng);
  std::vector<double> y(32);
  for (std::size_t r = 0; r < 32; ++r) y[r] = x(r, 0) - 2 * x(r, 1) + x(r, 2) * x(r, 0);
  Hyperparams hp;
  hp.max_depth = 5;
  hp.lambda = 0.0;
  hp.gamma = 0.0;
  hp.eta = 1.0;
  hp.min_leaf = 1;
  hp.n_trees = 50;
  const auto curve = tuning::staged_rmse(train(x, y, hp), x, y);
  EXPECT_LT(curve.back(), 1e-6);
}

TEST(TrainProperties, SeededRunsAreBitIdentical) {
  auto rng = make_rng(2, "determinism");
  const auto x = testing::random_matrix(80, 5, rng);
  std::vector<double> y(80);
  for (std::size_t r = 0; r < 80; ++r) y[r] = x(r, 0) + x(r, 3);
  Hyperparams hp;
  hp.subsample = 0.7;
  hp.colsample = 0.6;
  hp.n_trees = 30;
  hp.seed = 99;
  const auto a = train(x, y, hp);
  const auto b = train(x, y, hp);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(fingerprint(a), fingerprint(b));
  hp.seed = 100;
  EXPECT_NE(fingerprint(train(x, y, hp)), fingerprint(a));
}

TEST(TrainProperties, CoversPartitionAndRespectMinLeaf) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_rng(seed, "covers");
    const auto x = testing::random_matrix(100, 4, rng);
    std::vector<double> y(100);
    for (std::size_t r = 0; r < 100; ++r) y[r] = x(r, 0) * x(r, 1);
    Hyperparams hp;
    hp.max_depth = 4;
    hp.min_leaf = 1 + static_cast<int>(seed % 8);
    hp.subsample = 0.8;
    hp.n_trees = 10;
    hp.seed = seed;
    const auto model = train(x, y, hp);
    for (const auto& tree : model.trees) {
      EXPECT_LE(tree.depth(), hp.max_depth);
      EXPECT_EQ(tree.nodes[0].cover, 80.0);  // floor(0.8 * 100) sampled rows
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) {
          EXPECT_GE(node.cover, hp.min_leaf);
        } else {
          EXPECT_EQ(node.cover, tree.nodes[node.left].cover + tree.nodes[node.right].cover);
        }
      }
    }
  }
}

TEST(TrainProperties, ColumnPermutationInvariance) {
  auto rng = make_rng(4, "permute");
  const auto x = testing::random_matrix(70, 4, rng);
  std::vector<double> y(70);
  for (std::size_t r = 0; r < 70; ++r) y[r] = x(r, 0) - x(r, 2) * x(r, 3);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  std::vector<double> values;
  std::vector<std::string> names;
  for (const auto c : perm) names.push_back(x.names()[c]);
  for (std::size_t r = 0; r < 70; ++r) {
    for (const auto c : perm) values.push_back(x(r, c));
  }
  const FeatureMatrix xp(70, names, values);
  Hyperparams hp;
  hp.max_depth = 3;
  hp.n_trees = 20;
  EXPECT_EQ(predict(train(x, y, hp), x), predict(train(xp, y, hp), xp));
}

TEST(Serialization, JsonRoundTripIsExact) {
  auto rng = make_rng(6, "json");
  const auto x = testing::random_matrix(50, 3, rng);
  std::vector<double> y(50);
  for (std::size_t r = 0; r < 50; ++r) y[r] = x(r, 1) / 3.0;
  Hyperparams hp;
  hp.n_trees = 7;
  hp.subsample = 0.9;
  const auto model = train(x, y, hp);
  const auto back = ensemble_from_json(nlohmann::json::parse(to_json(model).dump()));
  EXPECT_EQ(predict(back, x), predict(model, x));
  EXPECT_EQ(to_json(back).dump(), to_json(model).dump());
  EXPECT_EQ(back.hyperparams, model.hyperparams);
}

TEST(Serialization, TruncateKeepsPrefix) {
  const auto x = column({0, 1, 2, 3});
  auto hp = exact_hp();
  hp.n_trees = 5;
  hp.eta = 0.5;
  const auto model = train(x, std::vector<double>{0, 1, 4, 9}, hp);
  const auto cut = truncate(model, 2);
  EXPECT_EQ(cut.trees.size(), 2u);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double expected =
        model.base_score + model.trees[0].predict(x.row(r)) + model.trees[1].predict(x.row(r));
    EXPECT_EQ(cut.predict_row(x.row(r)), expected);
  }
}

}  // namespace
}  // namespace hte::gbtree
