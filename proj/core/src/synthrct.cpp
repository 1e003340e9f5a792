#include "hte/synthrct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "hte/csv.hpp"
#include "hte/error.hpp"
#include "hte/expression.hpp"
#include "hte/random.hpp"
#include "hte/stats.hpp"
#include "hte/tuning.hpp"

namespace hte::synthrct {

namespace {

using tabular::ColumnKind;
using tabular::ColumnRole;
using tabular::ColumnSpec;
using tabular::Condition;

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCode::kBadConfig, msg);
}

bool is_fraction(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

std::string_view generator_name(GeneratorType g) {
  switch (g) {
    case GeneratorType::kNormal: return "normal";
    case GeneratorType::kUniformInt: return "uniform_int";
    case GeneratorType::kCategorical: return "categorical";
  }
  return "unknown";
}

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
  const auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorCode::kBadConfig, std::string("config key '") + key + "' has the wrong type");
  }
}

void reject_unknown(const nlohmann::json& doc, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      fail(ErrorCode::kBadConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

FeatureConfig feature_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "feature entries must be objects");
  reject_unknown(doc, {"name", "kind", "generator", "missing_rate"}, "feature");
  FeatureConfig f;
  f.name = get_or<std::string>(doc, "name", "");
  const auto kind = get_or<std::string>(doc, "kind", "continuous");
  if (kind == "continuous") f.kind = ColumnKind::kContinuous;
  else if (kind == "ordinal") f.kind = ColumnKind::kOrdinal;
  else if (kind == "categorical") f.kind = ColumnKind::kCategorical;
  else fail(ErrorCode::kBadConfig, "feature '" + f.name + "' has unknown kind '" + kind + "'");

  require(doc.contains("generator") && doc.at("generator").is_object(),
          "feature '" + f.name + "' needs a generator object");
  const auto& g = doc.at("generator");
  const auto type = get_or<std::string>(g, "type", "");
  if (type == "normal") {
    reject_unknown(g, {"type", "mean", "sd"}, "normal generator");
    f.generator = GeneratorType::kNormal;
    f.mean = get_or<double>(g, "mean", 0.0);
    f.sd = get_or<double>(g, "sd", 1.0);
  } else if (type == "uniform_int") {
    reject_unknown(g, {"type", "lo", "hi"}, "uniform_int generator");
    f.generator = GeneratorType::kUniformInt;
    f.lo = get_or<int>(g, "lo", 0);
    f.hi = get_or<int>(g, "hi", 1);
  } else if (type == "categorical") {
    reject_unknown(g, {"type", "labels", "probs"}, "categorical generator");
    f.generator = GeneratorType::kCategorical;
    f.labels = get_or<std::vector<std::string>>(g, "labels", {});
    f.probs = get_or<std::vector<double>>(g, "probs", {});
  } else {
    fail(ErrorCode::kBadConfig, "feature '" + f.name + "' has unknown generator '" + type + "'");
  }
  if (doc.contains("missing_rate")) f.missing_rate = get_or<double>(doc, "missing_rate", 0.0);
  return f;
}

nlohmann::json feature_to_json(const FeatureConfig& f) {
  nlohmann::json g = {{"type", generator_name(f.generator)}};
  switch (f.generator) {
    case GeneratorType::kNormal:
      g["mean"] = f.mean;
      g["sd"] = f.sd;
      break;
    case GeneratorType::kUniformInt:
      g["lo"] = f.lo;
      g["hi"] = f.hi;
      break;
    case GeneratorType::kCategorical:
      g["labels"] = f.labels;
      g["probs"] = f.probs;
      break;
  }
  nlohmann::json doc = {{"name", f.name}, {"kind", tabular::to_string(f.kind)}, {"generator", g}};
  if (f.missing_rate) doc["missing_rate"] = *f.missing_rate;
  return doc;
}

std::string padded(std::size_t value, std::size_t width) {
  auto s = std::to_string(value);
  if (s.size() < width) s.insert(0, width - s.size(), '0');
  return s;
}

std::vector<double> draw_feature(const FeatureConfig& f, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  switch (f.generator) {
    case GeneratorType::kNormal: {
      std::normal_distribution<double> dist(f.mean, f.sd);
      for (auto& v : out) v = dist(rng);
      break;
    }
    case GeneratorType::kUniformInt: {
      std::uniform_int_distribution<int> dist(f.lo, f.hi);
      for (auto& v : out) v = dist(rng);
      break;
    }
    case GeneratorType::kCategorical: {
      std::discrete_distribution<int> dist(f.probs.begin(), f.probs.end());
      for (auto& v : out) v = dist(rng);
      break;
    }
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  require(n_schools >= 2, "n_schools must be at least 2");
  require(n_students >= n_schools, "n_students must be at least n_schools");
  require(std::isfinite(noise_sd) && noise_sd >= 0.0, "noise_sd must be non-negative");
  require(std::isfinite(school_sd) && school_sd >= 0.0, "school_sd must be non-negative");
  require(std::isfinite(pre_mean) && std::isfinite(pre_sd) && pre_sd >= 0.0,
          "pre outcome mean/sd must be finite with sd >= 0");
  require(is_fraction(missing_rate), "missing_rate must lie in [0, 1]");
  require(is_fraction(treatment_fraction), "treatment_fraction must lie in [0, 1]");

  std::set<std::string> names = {kIdColumn, kGroupColumn, kConditionColumn, kPreColumn,
                                 kPostColumn};
  for (const auto& f : features) {
    require(!f.name.empty(), "feature names must be non-empty");
    require(names.insert(f.name).second, "duplicate column name '" + f.name + "'");
    if (f.missing_rate) require(is_fraction(*f.missing_rate), "missing_rate of '" + f.name + "' must lie in [0, 1]");
    switch (f.generator) {
      case GeneratorType::kNormal:
        require(f.kind != ColumnKind::kCategorical, "'" + f.name + "': normal generator needs a numeric kind");
        require(std::isfinite(f.mean) && std::isfinite(f.sd) && f.sd >= 0.0,
                "'" + f.name + "': normal needs finite mean and sd >= 0");
        break;
      case GeneratorType::kUniformInt:
        require(f.kind != ColumnKind::kCategorical, "'" + f.name + "': uniform_int needs a numeric kind");
        require(f.lo <= f.hi, "'" + f.name + "': uniform_int needs lo <= hi");
        break;
      case GeneratorType::kCategorical: {
        require(f.kind == ColumnKind::kCategorical, "'" + f.name + "': categorical generator needs kind categorical");
        require(!f.labels.empty() && f.labels.size() == f.probs.size(),
                "'" + f.name + "': labels and probs must be non-empty and equal length");
        std::set<std::string> unique(f.labels.begin(), f.labels.end());
        require(unique.size() == f.labels.size(), "'" + f.name + "': duplicate category label");
        require(!unique.contains(std::string(tabular::kMissingCategory)),
                "'" + f.name + "': category label is reserved");
        double total = 0.0;
        for (const double p : f.probs) {
          require(std::isfinite(p) && p >= 0.0, "'" + f.name + "': probabilities must be >= 0");
          total += p;
        }
        require(std::abs(total - 1.0) < 1e-9, "'" + f.name + "': probabilities must sum to 1");
        break;
      }
    }
  }
  for (const auto* text : {&drift, &effect}) {
    for (const auto& ref : Expression::parse(*text).references()) {
      require(names.contains(ref) && ref != kIdColumn && ref != kGroupColumn &&
                  ref != kConditionColumn && ref != kPostColumn,
              "expression \"" + *text + "\" references unknown feature '" + ref + "'");
    }
  }
}

SynthConfig synth_config_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "synth config must be a JSON object");
  reject_unknown(doc,
                 {"n_students", "n_schools", "features", "pre_mean", "pre_sd", "drift", "effect",
                  "noise_sd", "missing_rate", "treatment_fraction", "school_sd", "seed"},
                 "synth config");
  SynthConfig cfg;
  cfg.n_students = get_or<std::size_t>(doc, "n_students", cfg.n_students);
  cfg.n_schools = get_or<std::size_t>(doc, "n_schools", cfg.n_schools);
  if (doc.contains("features")) {
    require(doc.at("features").is_array(), "features must be an array");
    for (const auto& f : doc.at("features")) cfg.features.push_back(feature_from_json(f));
  }
  cfg.pre_mean = get_or<double>(doc, "pre_mean", cfg.pre_mean);
  cfg.pre_sd = get_or<double>(doc, "pre_sd", cfg.pre_sd);
  cfg.drift = get_or<std::string>(doc, "drift", cfg.drift);
  cfg.effect = get_or<std::string>(doc, "effect", cfg.effect);
  cfg.noise_sd = get_or<double>(doc, "noise_sd", cfg.noise_sd);
  cfg.missing_rate = get_or<double>(doc, "missing_rate", cfg.missing_rate);
  cfg.treatment_fraction = get_or<double>(doc, "treatment_fraction", cfg.treatment_fraction);
  cfg.school_sd = get_or<double>(doc, "school_sd", cfg.school_sd);
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const SynthConfig& cfg) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : cfg.features) features.push_back(feature_to_json(f));
  return {{"n_students", cfg.n_students},
          {"n_schools", cfg.n_schools},
          {"features", features},
          {"pre_mean", cfg.pre_mean},
          {"pre_sd", cfg.pre_sd},
          {"drift", cfg.drift},
          {"effect", cfg.effect},
          {"noise_sd", cfg.noise_sd},
          {"missing_rate", cfg.missing_rate},
          {"treatment_fraction", cfg.treatment_fraction},
          {"school_sd", cfg.school_sd},
          {"seed", cfg.seed}};
}

SynthConfig planted_moderator(std::size_t n_students, std::size_t n_schools, double size,
                              double noise_sd, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_students = n_students;
  cfg.n_schools = n_schools;
  cfg.noise_sd = noise_sd;
  cfg.seed = seed;
  cfg.missing_rate = 0.02;

  FeatureConfig moderator{.name = kModerator};
  FeatureConfig belonging{.name = "school_belonging", .mean = 3.0, .sd = 0.8};
  FeatureConfig ses{.name = "ses_index"};
  FeatureConfig blocked{.name = "blocked_navigation_count",
                        .kind = ColumnKind::kOrdinal,
                        .generator = GeneratorType::kUniformInt,
                        .lo = 0,
                        .hi = 8};
  FeatureConfig challenge{.name = "challenge_seeking",
                          .kind = ColumnKind::kOrdinal,
                          .generator = GeneratorType::kUniformInt,
                          .lo = -4,
                          .hi = 4};
  FeatureConfig race{.name = "race_ethnicity",
                     .kind = ColumnKind::kCategorical,
                     .generator = GeneratorType::kCategorical,
                     .labels = {"group_a", "group_b", "group_c"},
                     .probs = {0.5, 0.3, 0.2}};
  cfg.features = {moderator, belonging, ses, blocked, challenge, race};
  cfg.drift = "-0.15 + 0.1 * ses_index + threshold(gpa_pre, 3.5, 0, -0.3)";
  cfg.effect = size == 0.0 ? "0"
                           : "threshold(" + std::string(kModerator) + ", median, " +
                                 stats::format_double(size) + ", 0)";
  return cfg;
}

std::vector<double> GroundTruth::treated_cate() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < condition.size(); ++i) {
    if (condition[i] == Condition::kTreatment) out.push_back(true_cate[i]);
  }
  return out;
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_students;
  const auto drift_expr = Expression::parse(cfg.drift);
  const auto effect_expr = Expression::parse(cfg.effect);

  // Near-uniform school sizes, shuffled over students.
  std::vector<std::size_t> school(n);
  for (std::size_t i = 0; i < n; ++i) school[i] = i % cfg.n_schools;
  {
    auto rng = make_rng(cfg.seed, "school");
    std::shuffle(school.begin(), school.end(), rng);
  }
  std::vector<double> shift(cfg.n_schools);
  {
    auto rng = make_rng(cfg.seed, "school_shift");
    std::normal_distribution<double> dist(0.0, cfg.school_sd);
    for (auto& s : shift) s = cfg.school_sd > 0.0 ? dist(rng) : 0.0;
  }
  std::vector<Condition> condition(n);
  {
    auto rng = make_rng(cfg.seed, "condition");
    std::bernoulli_distribution dist(cfg.treatment_fraction);
    for (auto& c : condition) c = dist(rng) ? Condition::kTreatment : Condition::kControl;
  }

  Columns vars;
  {
    auto rng = make_rng(cfg.seed, "pre");
    std::normal_distribution<double> dist(cfg.pre_mean, cfg.pre_sd);
    auto& pre = vars[kPreColumn];
    pre.resize(n);
    for (auto& v : pre) v = std::clamp(cfg.pre_sd > 0.0 ? dist(rng) : cfg.pre_mean, 0.0, 4.0);
  }
  for (std::size_t f = 0; f < cfg.features.size(); ++f) {
    auto rng = make_rng(cfg.seed, "feature", f);
    vars[cfg.features[f].name] = draw_feature(cfg.features[f], n, rng);
  }

  GroundTruth truth;
  truth.condition = condition;
  truth.true_drift = drift_expr.evaluate(vars, n);
  truth.true_cate = effect_expr.evaluate(vars, n);
  const auto& pre = vars.at(kPreColumn);
  std::vector<double> post(n);
  {
    auto rng = make_rng(cfg.seed, "noise");
    std::normal_distribution<double> dist(0.0, cfg.noise_sd);
    for (std::size_t i = 0; i < n; ++i) {
      truth.true_drift[i] += shift[school[i]];
      const double noise = cfg.noise_sd > 0.0 ? dist(rng) : 0.0;
      const double treated = condition[i] == Condition::kTreatment ? truth.true_cate[i] : 0.0;
      post[i] = std::clamp(pre[i] + truth.true_drift[i] + treated + noise, 0.0, 4.0);
    }
  }

  const std::size_t id_width = std::to_string(n).size();
  const std::size_t school_width = std::to_string(cfg.n_schools).size();
  std::vector<ColumnSpec> specs = {
      {kIdColumn, ColumnKind::kCategorical, ColumnRole::kId, {}},
      {kGroupColumn, ColumnKind::kCategorical, ColumnRole::kGroup, {}},
      {kConditionColumn, ColumnKind::kCategorical, ColumnRole::kCondition, {}},
      {kPreColumn, ColumnKind::kContinuous, ColumnRole::kPreOutcome, {}},
      {kPostColumn, ColumnKind::kContinuous, ColumnRole::kPostOutcome, {}}};
  tabular::LabelColumn ids(n), schools(n), conds(n);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = "s" + padded(i + 1, id_width);
    truth.row_id.push_back(*ids[i]);
    schools[i] = "school_" + padded(school[i] + 1, school_width);
    conds[i] = std::string(tabular::to_string(condition[i]));
  }
  std::vector<tabular::ColumnData> columns = {ids, schools, conds,
                                              tabular::NumericColumn(pre.begin(), pre.end()),
                                              tabular::NumericColumn(post.begin(), post.end())};

  for (std::size_t f = 0; f < cfg.features.size(); ++f) {
    const auto& fc = cfg.features[f];
    const auto& values = vars.at(fc.name);
    const double rate = fc.missing_rate.value_or(cfg.missing_rate);
    auto rng = make_rng(cfg.seed, "missing", f);
    std::bernoulli_distribution missing(rate);
    std::vector<bool> drop(n);
    for (std::size_t i = 0; i < n; ++i) drop[i] = rate > 0.0 && missing(rng);

    specs.push_back({fc.name, fc.kind, ColumnRole::kFeature,
                     fc.kind == ColumnKind::kCategorical ? fc.labels : std::vector<std::string>{}});
    if (fc.kind == ColumnKind::kCategorical) {
      tabular::LabelColumn col(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!drop[i]) col[i] = fc.labels[static_cast<std::size_t>(values[i])];
      }
      columns.emplace_back(std::move(col));
    } else {
      tabular::NumericColumn col(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!drop[i]) col[i] = values[i];
      }
      columns.emplace_back(std::move(col));
    }
  }
  return {tabular::Dataset(tabular::Schema(std::move(specs)), std::move(columns)),
          std::move(truth)};
}

OracleResult oracle_eval(std::span<const double> predicted_effects, const GroundTruth& truth) {
  const auto cate = truth.treated_cate();
  if (predicted_effects.size() != cate.size()) {
    fail(ErrorCode::kLengthMismatch, "predicted effects length " +
                                         std::to_string(predicted_effects.size()) +
                                         " differs from treated count " + std::to_string(cate.size()));
  }
  OracleResult out;
  out.pearson_r = stats::pearson(predicted_effects, cate);
  out.rmse = tuning::rmse(predicted_effects, cate);
  return out;
}

std::string truth_csv(const GroundTruth& truth) {
  std::string out = "student_id,condition,true_drift,true_cate\n";
  for (std::size_t i = 0; i < truth.row_id.size(); ++i) {
    const std::vector<std::string> fields = {truth.row_id[i],
                                             std::string(tabular::to_string(truth.condition[i])),
                                             stats::format_double(truth.true_drift[i]),
                                             stats::format_double(truth.true_cate[i])};
    out += csv::format_row(fields);
  }
  return out;
}

std::string data_csv(const tabular::Dataset& data) {
  const auto& schema = data.schema();
  std::vector<std::string> fields;
  for (const auto& col : schema.columns()) fields.push_back(col.name);
  std::string out = csv::format_row(fields);
  for (std::size_t r = 0; r < data.row_count(); ++r) {
    fields.clear();
    for (std::size_t c = 0; c < schema.size(); ++c) {
      if (schema[c].numeric()) {
        const auto& v = data.numeric(c)[r];
        fields.push_back(v ? stats::format_double(*v) : "NA");
      } else {
        const auto& v = data.labels(c)[r];
        fields.push_back(v ? *v : "NA");
      }
    }
    out += csv::format_row(fields);
  }
  return out;
}

std::vector<std::filesystem::path> write_synth(const SynthData& synth,
                                               const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
  const std::vector<std::filesystem::path> paths = {dir / "data.csv", dir / "truth.csv",
                                                    dir / "schema.json"};
  csv::write_file(paths[0], data_csv(synth.data));
  csv::write_file(paths[1], truth_csv(synth.truth));
  csv::write_file(paths[2], synth.data.schema().to_json().dump(2) + "\n");
  return paths;
}

}  // namespace hte::synthrct
