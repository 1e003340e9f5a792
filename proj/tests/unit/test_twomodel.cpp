#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "hte/error.hpp"
#include "hte/random.hpp"
#include "hte/stats.hpp"
#include "hte/synthrct.hpp"
#include "hte/twomodel.hpp"

namespace hte::twomodel {
namespace {

using tabular::Condition;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

// A narrow grid and few trees keep every fit to a few milliseconds.
PipelineConfig quick_config(std::uint64_t seed = 1) {
  PipelineConfig cfg;
  cfg.seed = seed;
  for (const auto axis : tuning::kAxisOrder) {
    cfg.grid.axis_ref(axis) = {tuning::axis_value(gbtree::Hyperparams{}, axis)};
  }
  cfg.grid.axis_ref(tuning::Axis::kMaxDepth) = {2, 3};
  cfg.grid.axis_ref(tuning::Axis::kEta) = {0.1, 0.3};
  cfg.inner_folds = 2;
  cfg.passes = 1;
  cfg.search_trees = 10;
  cfg.max_trees = 20;
  cfg.leakage_hp.n_trees = 20;
  cfg.curve_hp.n_trees = 20;
  return cfg;
}

synthrct::SynthData quick_data(std::uint64_t seed, std::size_t n = 240, std::size_t schools = 6) {
  return synthrct::generate(synthrct::planted_moderator(n, schools, 0.3, 0.3, seed));
}

tabular::Dataset with_leak(const tabular::Dataset& data) {
  auto specs = data.schema().columns();
  std::vector<tabular::ColumnData> columns;
  for (std::size_t c = 0; c < specs.size(); ++c) columns.push_back(data.column(c));
  specs.push_back({.name = "leak", .kind = tabular::ColumnKind::kContinuous, .categories = {}});
  tabular::NumericColumn leak;
  for (const auto c : data.conditions()) leak.emplace_back(c == Condition::kTreatment ? 1.0 : 0.0);
  columns.emplace_back(std::move(leak));
  return tabular::Dataset(tabular::Schema(std::move(specs)), std::move(columns));
}

TEST(Config, JsonRoundTripAndHash) {
  const auto cfg = quick_config(5);
  const auto doc = to_json(cfg);
  EXPECT_EQ(to_json(pipeline_config_from_json(doc)), doc);
  auto threaded = cfg;
  threaded.threads = 8;
  EXPECT_EQ(config_hash(threaded), config_hash(cfg));
  auto reseeded = cfg;
  reseeded.seed = 6;
  EXPECT_NE(config_hash(reseeded), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 16u);
  auto bad = doc;
  bad["mystery"] = true;
  EXPECT_EQ(code_of([&] { pipeline_config_from_json(bad); }), ErrorCode::kBadConfig);
  auto invalid = cfg;
  invalid.max_trees = 0;
  EXPECT_EQ(code_of([&] { invalid.validate(); }), ErrorCode::kBadConfig);
}

TEST(Residuals, IdentityAndZeroModel) {
  const auto synth = quick_data(1);
  const auto& data = synth.data;
  const auto cfg = quick_config();
  const auto control = data.select_rows(data.rows_with(Condition::kControl));
  const auto treated = data.select_rows(data.rows_with(Condition::kTreatment));
  const auto model1 = fit_final(control, tabular::outcome_change(control), cfg, "model1");

  const auto labels = counterfactual_residuals(model1.ensemble, treated, model1.plan, cfg);
  ASSERT_EQ(labels.residual.size(), treated.row_count());
  for (std::size_t i = 0; i < labels.residual.size(); ++i) {
    EXPECT_EQ(labels.residual[i], labels.actual_change[i] - labels.predicted_change[i]);
  }

  auto zero = model1.ensemble;
  zero.trees.clear();
  zero.base_score = 0.0;
  const auto raw = counterfactual_residuals(zero, treated, model1.plan, cfg);
  EXPECT_EQ(raw.residual, tabular::outcome_change(treated));

  EXPECT_EQ(code_of([&] { counterfactual_residuals(zero, control, model1.plan, cfg); }),
            ErrorCode::kBadInputs);
}

TEST(FitModel, FoldModelsIgnoreHeldOutTargets) {
  const auto synth = quick_data(2);
  const auto control =
      synth.data.select_rows(synth.data.rows_with(Condition::kControl));
  const auto cfg = quick_config();
  auto y = tabular::outcome_change(control);
  const auto base = fit_model(control, y, cfg, "model1");
  ASSERT_EQ(base.fold_groups.size(), 6u);

  // Corrupt the first school's targets: only folds training on it may change.
  const auto groups = control.groups();
  const auto& held = base.fold_groups.front();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (groups[i] == held) y[i] += 100.0;
  }
  const auto moved = fit_model(control, y, cfg, "model1");
  EXPECT_EQ(moved.fold_fingerprints.front(), base.fold_fingerprints.front());
  for (std::size_t f = 1; f < base.fold_fingerprints.size(); ++f) {
    EXPECT_NE(moved.fold_fingerprints[f], base.fold_fingerprints[f]);
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (groups[i] == held) {
      EXPECT_EQ(moved.oof_predictions[i], base.oof_predictions[i]);
    }
  }
}

TEST(FitModel, ThreadCountDoesNotChangeResults) {
  const auto synth = quick_data(3);
  const auto treated = synth.data.select_rows(synth.data.rows_with(Condition::kTreatment));
  const auto y = tabular::outcome_change(treated);
  auto cfg = quick_config();
  const auto one = fit_model(treated, y, cfg, "model2");
  cfg.threads = 3;
  const auto three = fit_model(treated, y, cfg, "model2");
  EXPECT_EQ(one.oof_predictions, three.oof_predictions);
  EXPECT_EQ(one.fold_fingerprints, three.fold_fingerprints);
  EXPECT_EQ(gbtree::fingerprint(one.final.ensemble), gbtree::fingerprint(three.final.ensemble));
}

TEST(Ols, RecoversExactLinearTarget) {
  const auto synth = quick_data(4);
  const auto& data = synth.data;
  const auto& pre = data.numeric(data.schema().role_index(tabular::ColumnRole::kPreOutcome));
  std::vector<double> y;
  for (const auto& v : pre) y.push_back(2.0 * *v + 1.0);
  const auto summary = ols_baseline(data, y, quick_config());
  for (const double r : summary.per_fold_r) EXPECT_NEAR(r, 1.0, 1e-9);
  EXPECT_NEAR(summary.rmse, 0.0, 1e-9);
}

TEST(Leakage, DetectsConditionEncodedAsFeature) {
  const auto synth = quick_data(5, 400, 8);
  const auto leaky = condition_leakage_check(with_leak(synth.data), quick_config());
  EXPECT_EQ(leaky.n, 400u);
  EXPECT_GT(leaky.accuracy, 0.95);
  EXPECT_LT(leaky.p_value, 0.05);
  const auto clean = condition_leakage_check(synth.data, quick_config());
  EXPECT_LT(clean.accuracy, leaky.accuracy);
}

TEST(FitModel, NoiselessControlSignalIsRecovered) {
  synthrct::SynthConfig cfg;
  cfg.n_students = 600;
  cfg.n_schools = 6;
  cfg.features = {{.name = "x1"}, {.name = "x2"}};
  cfg.pre_mean = 2.0;
  cfg.pre_sd = 0.2;
  cfg.drift = "0.5 * x1";
  cfg.noise_sd = 0.0;
  cfg.school_sd = 0.0;
  cfg.seed = 12;
  const auto synth = synthrct::generate(cfg);
  const auto control = synth.data.select_rows(synth.data.rows_with(Condition::kControl));
  auto pipeline = quick_config();
  pipeline.max_trees = 200;
  const auto result = fit_control_model(synth.data, pipeline);
  EXPECT_EQ(result.oof_predictions.size(), control.row_count());
  EXPECT_GE(result.eval.mean_r, 0.95);
}

TEST(FitModelProperties, PureNoiseIsRarelySignificant) {
  int significant = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto synth = quick_data(200 + seed, 300, 6);
    const auto treated = synth.data.select_rows(synth.data.rows_with(Condition::kTreatment));
    auto rng = make_rng(seed, "pure_noise");
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<double> y(treated.row_count());
    for (auto& v : y) v = noise(rng);
    significant += tuning::significantly_positive(fit_model(treated, y, quick_config(seed), "model2").eval);
  }
  EXPECT_LE(significant, 2);
}

TEST(LeakageProperties, IndependentFeaturesAreNotSignificant) {
  int quiet = 0, near_base = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto synth = quick_data(300 + seed, 400, 8);
    PipelineConfig cfg;  // default classifier settings
    cfg.seed = seed;
    const auto result = condition_leakage_check(synth.data, cfg);
    quiet += result.p_value > 0.05;
    near_base += std::abs(result.accuracy - result.base_rate) <= 0.03;
  }
  EXPECT_GE(quiet, 18);
  EXPECT_GE(near_base, 18);
}

TEST(Leakage, PerfectLeakAndShuffledLeak) {
  const auto synth = quick_data(5, 400, 8);
  const auto leaky = with_leak(synth.data);
  PipelineConfig cfg;
  const auto caught = condition_leakage_check(leaky, cfg);
  EXPECT_GE(caught.accuracy, 0.99);
  EXPECT_LT(caught.p_value, 0.001);

  // Permute the condition column: the leak column no longer tracks it.
  auto specs = leaky.schema().columns();
  std::vector<tabular::ColumnData> columns;
  for (std::size_t c = 0; c < specs.size(); ++c) columns.push_back(leaky.column(c));
  const auto cond = leaky.schema().role_index(tabular::ColumnRole::kCondition);
  auto labels = leaky.labels(cond);
  auto rng = make_rng(5, "shuffle_condition");
  std::shuffle(labels.begin(), labels.end(), rng);
  columns[cond] = labels;
  const tabular::Dataset shuffled(tabular::Schema(std::move(specs)), std::move(columns));
  EXPECT_GT(condition_leakage_check(shuffled, cfg).p_value, 0.05);
}

TEST(Stability, ImportanceCorrelation) {
  shapley::ImportanceTable a{{{"x", 3.0, 0.0}, {"y", 2.0, 0.0}, {"z", 1.0, 0.0}}};
  EXPECT_NEAR(*importance_correlation(a, a), 1.0, 1e-15);
  shapley::ImportanceTable b{{{"z", 3.0, 0.0}, {"y", 2.0, 0.0}, {"x", 1.0, 0.0}}};
  EXPECT_NEAR(*importance_correlation(a, b), -1.0, 1e-15);
  shapley::ImportanceTable flat{{{"x", 1.0, 0.0}, {"y", 1.0, 0.0}, {"z", 1.0, 0.0}}};
  EXPECT_FALSE(importance_correlation(a, flat).has_value());
  shapley::ImportanceTable partial{{{"x", 3.0, 0.0}, {"y", 2.0, 0.0}}};
  EXPECT_NEAR(*importance_correlation(a, partial), 3.0 / std::sqrt(84.0 / 9.0), 1e-15);  // z as 0
}

TEST(Stability, IdenticalHalvesCorrelatePerfectly) {
  const auto synth = quick_data(6);
  const auto treated = synth.data.select_rows(synth.data.rows_with(Condition::kTreatment));
  const auto y = tabular::outcome_change(treated);
  const auto result = compare_halves(treated, y, treated, y, quick_config());
  ASSERT_TRUE(result.importance_correlation.has_value());
  EXPECT_NEAR(*result.importance_correlation, 1.0, 1e-12);
}

TEST(Stability, SplitNeedsFourGroups) {
  const auto synth = quick_data(7, 120, 3);
  const auto treated = synth.data.select_rows(synth.data.rows_with(Condition::kTreatment));
  ResidualLabels labels;
  labels.residual = tabular::outcome_change(treated);
  EXPECT_EQ(code_of([&] { split_sample_stability(treated, labels, quick_config()); }),
            ErrorCode::kTooFewGroups);
}

TEST(LearningCurve, ShapeAndValidation) {
  const auto synth = quick_data(8, 300, 6);
  const auto y = tabular::outcome_change(synth.data);
  const std::vector<std::size_t> ks = {1, 3, 5};
  const auto curve = learning_curve(synth.data, y, quick_config(), ks, 4);
  ASSERT_EQ(curve.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(curve[i].k, ks[i]);
    EXPECT_EQ(curve[i].per_repeat_r.size(), 4u);
  }
  const std::vector<std::size_t> too_many = {6};
  EXPECT_EQ(code_of([&] { learning_curve(synth.data, y, quick_config(), too_many, 2); }),
            ErrorCode::kBadK);
}

TEST(LearningCurve, AllButOneGroupWithOneRepeat) {
  const auto synth = quick_data(8, 300, 6);
  const auto y = tabular::outcome_change(synth.data);
  const std::vector<std::size_t> ks = {5};
  const auto curve = learning_curve(synth.data, y, quick_config(), ks, 1);
  ASSERT_EQ(curve.size(), 1u);
  ASSERT_EQ(curve[0].per_repeat_r.size(), 1u);
  EXPECT_EQ(curve[0].mean_r, curve[0].per_repeat_r[0]);
}

TEST(LearningCurveProperties, ZeroSignalCurveIsFlat) {
  // Draws within one curve share schools, so flatness is tested across
  // independent noise replications instead.
  const auto synth = quick_data(21, 1200, 12);
  const std::vector<std::size_t> ks = {1, 3, 6, 11};
  std::vector<std::vector<double>> means(ks.size());
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    auto rng = make_rng(rep, "flat_curve");
    std::normal_distribution<double> noise;
    std::vector<double> y(synth.data.row_count());
    for (auto& v : y) v = noise(rng);
    const auto curve = learning_curve(synth.data, y, quick_config(rep), ks, 5);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (!std::isnan(curve[i].mean_r)) means[i].push_back(curve[i].mean_r);
    }
  }
  for (std::size_t i = 0; i < ks.size(); ++i) {
    ASSERT_GE(means[i].size(), 10u) << "k=" << ks[i];
    const double t = stats::mean(means[i]) /
                     (stats::sample_sd(means[i]) / std::sqrt(static_cast<double>(means[i].size())));
    const double p_one_sided = stats::t_two_sided_p(t, means[i].size() - 1.0) / 2.0;
    // Bonferroni over the four k values.
    EXPECT_FALSE(t > 0 && p_one_sided < 0.05 / ks.size()) << "k=" << ks[i] << " t=" << t;
  }
}

TEST(OverfitProbe, MemorizesTrainingRows) {
  const auto synth = quick_data(9);
  const auto treated = synth.data.select_rows(synth.data.rows_with(Condition::kTreatment));
  const auto y = tabular::outcome_change(treated);
  auto hp = overfit_hyperparams();
  hp.n_trees = 100;
  const auto probe = overfit_probe(treated, y, quick_config(), hp);
  ASSERT_TRUE(probe.train_r.has_value());
  EXPECT_GT(*probe.train_r, 0.99);
  ASSERT_TRUE(probe.heldout_r.has_value());
  EXPECT_LT(*probe.heldout_r, *probe.train_r);
}

TEST(Pipeline, RunsEndToEnd) {
  const auto synth = quick_data(10, 300, 6);
  const auto result = run_pipeline(synth.data, quick_config());
  EXPECT_EQ(result.n_control + result.n_treated, 300u);
  EXPECT_EQ(result.residual_summary.n, result.n_treated);
  EXPECT_EQ(result.model2.oof_predictions.size(), result.n_treated);
  EXPECT_EQ(result.model1.oof_predictions.size(), result.n_control);
}

}  // namespace
}  // namespace hte::twomodel
