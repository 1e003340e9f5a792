#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "hte/error.hpp"
#include "hte/expression.hpp"
#include "hte/synthrct.hpp"

namespace hte::synthrct {
namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

std::vector<double> eval(std::string_view text, const Columns& columns = {}, std::size_t rows = 1) {
  return Expression::parse(text).evaluate(columns, rows);
}

TEST(Expression, Arithmetic) {
  EXPECT_EQ(eval("1 + 2 * 3"), (std::vector<double>{7.0}));
  EXPECT_EQ(eval("-(1 - 3)"), (std::vector<double>{2.0}));
  EXPECT_EQ(eval("2 * -x", {{"x", {1.5, -1.0}}}, 2), (std::vector<double>{-3.0, 2.0}));
  EXPECT_EQ(eval("0.5e1"), (std::vector<double>{5.0}));
}

TEST(Expression, Threshold) {
  const Columns cols = {{"x", {1, 2, 3, 4}}};
  EXPECT_EQ(eval("threshold(x, 2, 10, 20)", cols, 4), (std::vector<double>{10, 20, 20, 20}));
  EXPECT_EQ(eval("threshold(x, median, x, 0)", cols, 4), (std::vector<double>{1, 2, 0, 0}));
  EXPECT_EQ(Expression::parse("threshold(x, median, y, 1) + z").references(),
            (std::set<std::string>{"x", "y", "z"}));
}

TEST(Expression, Errors) {
  for (const char* bad : {"1 +", "threshold(x)", "(1", "1 2", "threshold(3, 1, 0, 1)", "x $ y", ""}) {
    EXPECT_EQ(code_of([&] { Expression::parse(bad); }), ErrorCode::kBadConfig) << bad;
  }
  EXPECT_EQ(code_of([] { eval("missing_name"); }), ErrorCode::kBadConfig);
}

TEST(Expression, Median) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
}

SynthConfig small_config(std::uint64_t seed) { return planted_moderator(400, 8, 0.3, 0.5, seed); }

TEST(Generate, DeterministicPerSeed) {
  const auto a = generate(small_config(1));
  const auto b = generate(small_config(1));
  const auto c = generate(small_config(2));
  EXPECT_EQ(data_csv(a.data), data_csv(b.data));
  EXPECT_EQ(truth_csv(a.truth), truth_csv(b.truth));
  EXPECT_NE(data_csv(a.data), data_csv(c.data));
}

TEST(Generate, ShapeAndRanges) {
  const auto synth = generate(small_config(3));
  const auto& data = synth.data;
  EXPECT_EQ(data.row_count(), 400u);
  const auto groups = data.groups();
  EXPECT_EQ(std::set<std::string>(groups.begin(), groups.end()).size(), 8u);
  const auto& schema = data.schema();
  for (const auto role : {tabular::ColumnRole::kPreOutcome, tabular::ColumnRole::kPostOutcome}) {
    for (const auto& v : data.numeric(schema.role_index(role))) {
      ASSERT_TRUE(v.has_value());
      EXPECT_GE(*v, 0.0);
      EXPECT_LE(*v, 4.0);
    }
  }
  const auto& ids = data.labels(schema.role_index(tabular::ColumnRole::kId));
  EXPECT_EQ(*ids.front(), "s001");
  EXPECT_EQ(synth.truth.row_id.front(), "s001");
  EXPECT_EQ(synth.truth.condition, data.conditions());
}

TEST(Generate, PlantedEffectAndBalance) {
  const auto synth = generate(planted_moderator(5000, 20, 0.3, 0.5, 4));
  const auto& cate = synth.truth.true_cate;
  const double mean_cate = std::accumulate(cate.begin(), cate.end(), 0.0) / cate.size();
  EXPECT_NEAR(mean_cate, 0.15, 0.01);
  for (const double v : cate) EXPECT_TRUE(v == 0.0 || v == 0.3);
  const auto treated = synth.data.rows_with(tabular::Condition::kTreatment).size();
  EXPECT_NEAR(static_cast<double>(treated) / 5000.0, 0.5, 0.03);
  EXPECT_EQ(synth.truth.treated_cate().size(), treated);

  const auto& schema = synth.data.schema();
  const auto moderator = schema.index_of(kModerator);
  std::size_t missing = 0;
  for (std::size_t r = 0; r < 5000; ++r) missing += synth.data.is_missing(r, moderator);
  EXPECT_NEAR(missing / 5000.0, 0.02, 0.01);
}

TEST(Generate, NullEffectHasZeroCate) {
  const auto synth = generate(planted_moderator(300, 5, 0.0, 0.5, 5));
  for (const double v : synth.truth.true_cate) EXPECT_EQ(v, 0.0);
}

TEST(Generate, NoiselessOutcomeMatchesTruth) {
  auto cfg = planted_moderator(600, 6, 0.3, 0.0, 6);
  cfg.missing_rate = 0.0;
  for (auto& f : cfg.features) f.missing_rate.reset();
  const auto synth = generate(cfg);
  const auto& schema = synth.data.schema();
  const auto& pre = synth.data.numeric(schema.role_index(tabular::ColumnRole::kPreOutcome));
  const auto& post = synth.data.numeric(schema.role_index(tabular::ColumnRole::kPostOutcome));
  std::size_t interior = 0;
  for (std::size_t r = 0; r < 600; ++r) {
    if (*post[r] <= 0.0 || *post[r] >= 4.0) continue;
    ++interior;
    const double treated = synth.truth.condition[r] == tabular::Condition::kTreatment ? 1.0 : 0.0;
    EXPECT_NEAR(*post[r] - *pre[r], synth.truth.true_drift[r] + treated * synth.truth.true_cate[r],
                1e-12);
  }
  EXPECT_GT(interior, 500u);
}

TEST(Generate, ConfigValidation) {
  auto cfg = small_config(1);
  cfg.n_schools = 0;
  EXPECT_EQ(code_of([&] { generate(cfg); }), ErrorCode::kBadConfig);
  cfg = small_config(1);
  cfg.effect = "threshold(nonexistent, median, 1, 0)";
  EXPECT_EQ(code_of([&] { generate(cfg); }), ErrorCode::kBadConfig);
  cfg = small_config(1);
  cfg.treatment_fraction = 1.5;
  EXPECT_EQ(code_of([&] { generate(cfg); }), ErrorCode::kBadConfig);
}

TEST(Generate, ConfigJsonRoundTrip) {
  const auto cfg = small_config(9);
  const auto doc = to_json(cfg);
  EXPECT_EQ(to_json(synth_config_from_json(doc)), doc);
  auto bad = doc;
  bad["unexpected"] = 1;
  EXPECT_EQ(code_of([&] { synth_config_from_json(bad); }), ErrorCode::kBadConfig);
}

TEST(Generate, WrittenFilesReload) {
  const auto synth = generate(small_config(7));
  const auto dir = std::filesystem::temp_directory_path() / "hte_synth_test";
  std::filesystem::remove_all(dir);
  const auto files = write_synth(synth, dir);
  EXPECT_EQ(files.size(), 3u);
  const auto schema = tabular::load_schema(dir / "schema.json");
  const auto reloaded = tabular::load_csv(dir / "data.csv", schema);
  EXPECT_EQ(data_csv(reloaded), data_csv(synth.data));
  std::filesystem::remove_all(dir);
}

TEST(OracleEval, Examples) {
  const auto synth = generate(small_config(8));
  const auto cate = synth.truth.treated_cate();
  const auto perfect = oracle_eval(cate, synth.truth);
  ASSERT_TRUE(perfect.pearson_r.has_value());
  EXPECT_NEAR(*perfect.pearson_r, 1.0, 1e-12);
  EXPECT_EQ(perfect.rmse, 0.0);
  const std::vector<double> flat(cate.size(), 0.1);
  EXPECT_FALSE(oracle_eval(flat, synth.truth).pearson_r.has_value());
  EXPECT_EQ(code_of([&] { oracle_eval(std::vector<double>(3), synth.truth); }),
            ErrorCode::kLengthMismatch);
}

}  // namespace
}  // namespace hte::synthrct
