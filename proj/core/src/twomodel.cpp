#include "hte/twomodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "hte/error.hpp"
#include "hte/parallel.hpp"
#include "hte/random.hpp"
#include "hte/stats.hpp"

namespace hte::twomodel {

namespace {

using tabular::Condition;
using tabular::Dataset;

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

FeatureMatrix encode(const Dataset& rows, const tabular::ImputePlan& plan,
                     const PipelineConfig& cfg) {
  return tabular::encode_matrix(tabular::apply_impute(rows, plan),
                                {.include_pre_outcome = cfg.include_pre_outcome});
}

tabular::ImputePlan fold_plan(const Dataset& rows, std::span<const std::size_t> train_rows,
                              const PipelineConfig& cfg) {
  return cfg.impute_scope == ImputeScope::kFold ? tabular::fit_impute(rows, train_rows)
                                                : tabular::fit_impute(rows);
}

template <typename T>
std::vector<T> pick(std::span<const T> values, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (const auto r : rows) out.push_back(values[r]);
  return out;
}

void check_targets(const Dataset& rows, std::span<const double> targets) {
  if (targets.size() != rows.row_count()) {
    fail(ErrorCode::kLengthMismatch, "targets length " + std::to_string(targets.size()) +
                                         " differs from row count " +
                                         std::to_string(rows.row_count()));
  }
}

// A summary whose every group had undefined r reports mean_r 0 and p 1.
tuning::EvalSummary summarize(std::span<const double> pred, std::span<const double> actual,
                              std::span<const std::string> groups) {
  try {
    return tuning::per_group_r(pred, actual, groups);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNoDefinedFolds) throw;
  }
  tuning::EvalSummary s;
  s.skipped_folds = std::set<std::string>(groups.begin(), groups.end()).size();
  s.rmse = tuning::rmse(pred, actual);
  return s;
}

struct Tuned {
  gbtree::Ensemble ensemble;
  tuning::TuneTrace trace;
  int tree_count = 1;
};

Tuned tune_and_train(const FeatureMatrix& x, std::span<const double> y,
                     std::span<const std::string> groups, const PipelineConfig& cfg,
                     std::uint64_t seed, int threads) {
  gbtree::Hyperparams base;
  base.lambda = cfg.lambda;
  base.n_trees = cfg.search_trees;
  base.seed = derive_seed(seed, "trees");
  const tuning::TuneOptions options{.inner_folds = cfg.inner_folds,
                                    .passes = cfg.passes,
                                    .seed = derive_seed(seed, "inner"),
                                    .threads = threads};
  Tuned out;
  out.trace = tuning::coordinate_descent(x, y, groups, cfg.grid, base, options);
  out.tree_count =
      tuning::tune_tree_count(x, y, groups, out.trace.final, cfg.max_trees, options).best;
  auto hp = out.trace.final;
  hp.n_trees = out.tree_count;
  out.ensemble = gbtree::train(x, y, hp);
  return out;
}

}  // namespace

std::string_view to_string(ImputeScope scope) {
  return scope == ImputeScope::kFold ? "fold" : "global";
}

void PipelineConfig::validate() const {
  if (passes < 1) fail(ErrorCode::kBadConfig, "passes must be at least 1");
  if (inner_folds < 2) fail(ErrorCode::kBadConfig, "inner_folds must be at least 2");
  if (max_trees < 1 || max_trees > gbtree::kMaxTrees) {
    fail(ErrorCode::kBadConfig, "max_trees must lie in [1, 500]");
  }
  if (search_trees < 1 || search_trees > gbtree::kMaxTrees) {
    fail(ErrorCode::kBadConfig, "search_trees must lie in [1, 500]");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail(ErrorCode::kBadConfig, "lambda must be >= 0");
  if (threads < 1) fail(ErrorCode::kBadConfig, "threads must be at least 1");
  grid.validate();
  leakage_hp.validate();
  curve_hp.validate();
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kBadConfig, "pipeline config must be a JSON object");
  static const std::set<std::string> known = {
      "schema",    "grid",         "inner_folds", "passes",     "impute_scope",
      "seed",      "max_trees",    "search_trees", "lambda",    "include_pre_outcome",
      "leakage_hp", "curve_hp",    "dependence_top", "threads"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.contains(key)) fail(ErrorCode::kBadConfig, "unknown pipeline config key: " + key);
  }
  PipelineConfig cfg;
  cfg.schema = get_or<std::string>(doc, "schema", cfg.schema);
  if (doc.contains("grid")) cfg.grid = tuning::grid_from_json(doc.at("grid"));
  cfg.inner_folds = get_or<std::size_t>(doc, "inner_folds", cfg.inner_folds);
  cfg.passes = get_or<int>(doc, "passes", cfg.passes);
  const auto scope = get_or<std::string>(doc, "impute_scope", "fold");
  if (scope == "fold") cfg.impute_scope = ImputeScope::kFold;
  else if (scope == "global") cfg.impute_scope = ImputeScope::kGlobal;
  else fail(ErrorCode::kBadConfig, "impute_scope must be fold or global, got " + scope);
  cfg.seed = get_or<std::uint64_t>(doc, "seed", cfg.seed);
  cfg.max_trees = get_or<int>(doc, "max_trees", cfg.max_trees);
  cfg.search_trees = get_or<int>(doc, "search_trees", cfg.search_trees);
  cfg.lambda = get_or<double>(doc, "lambda", cfg.lambda);
  cfg.include_pre_outcome = get_or<bool>(doc, "include_pre_outcome", cfg.include_pre_outcome);
  if (doc.contains("leakage_hp")) cfg.leakage_hp = gbtree::hyperparams_from_json(doc.at("leakage_hp"));
  if (doc.contains("curve_hp")) cfg.curve_hp = gbtree::hyperparams_from_json(doc.at("curve_hp"));
  cfg.dependence_top = get_or<std::size_t>(doc, "dependence_top", cfg.dependence_top);
  cfg.threads = get_or<int>(doc, "threads", cfg.threads);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  return {{"schema", cfg.schema},
          {"grid", tuning::to_json(cfg.grid)},
          {"inner_folds", cfg.inner_folds},
          {"passes", cfg.passes},
          {"impute_scope", to_string(cfg.impute_scope)},
          {"seed", cfg.seed},
          {"max_trees", cfg.max_trees},
          {"search_trees", cfg.search_trees},
          {"lambda", cfg.lambda},
          {"include_pre_outcome", cfg.include_pre_outcome},
          {"leakage_hp", gbtree::to_json(cfg.leakage_hp)},
          {"curve_hp", gbtree::to_json(cfg.curve_hp)},
          {"dependence_top", cfg.dependence_top},
          {"threads", cfg.threads}};
}

std::string config_hash(const PipelineConfig& cfg) {
  auto doc = to_json(cfg);
  doc.erase("threads");
  const auto hash = fnv1a64(doc.dump());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = kHex[(hash >> (4 * i)) & 0xf];
  return out;
}

// ---------------------------------------------------------------------------

FinalModel fit_final(const Dataset& rows, std::span<const double> targets,
                     const PipelineConfig& cfg, std::string_view label) {
  check_targets(rows, targets);
  FinalModel out;
  out.plan = tabular::fit_impute(rows);
  out.matrix = encode(rows, out.plan, cfg);
  const auto groups = rows.groups();
  auto tuned = tune_and_train(out.matrix, targets, groups, cfg,
                              derive_seed(cfg.seed, std::string(label) + "/final"), cfg.threads);
  out.ensemble = std::move(tuned.ensemble);
  out.trace = std::move(tuned.trace);
  out.tree_count = tuned.tree_count;
  out.phis = shapley::tree_shap(out.ensemble, out.matrix, cfg.threads);
  out.importance = shapley::importance_table(out.phis, out.matrix.origin());
  return out;
}

ModelResult fit_model(const Dataset& rows, std::span<const double> targets,
                      const PipelineConfig& cfg, std::string_view label) {
  cfg.validate();
  check_targets(rows, targets);
  const auto groups = rows.groups();
  const auto plan = tuning::make_folds(groups, tuning::FoldMode::kLeaveOneGroupOut);

  ModelResult out;
  out.oof_predictions.assign(rows.row_count(), 0.0);
  out.fold_fingerprints.assign(plan.folds.size(), 0);
  std::vector<std::vector<double>> fold_pred(plan.folds.size());
  std::vector<std::vector<std::size_t>> fold_rows(plan.folds.size());
  parallel_for(plan.folds.size(), cfg.threads, [&](std::size_t f) {
    const auto& fold = plan.folds[f];
    const auto train_rows = tuning::rows_in(groups, fold.train_groups);
    fold_rows[f] = tuning::rows_in(groups, fold.test_groups);
    const auto x = encode(rows, fold_plan(rows, train_rows, cfg), cfg);
    const auto x_train = x.select_rows(train_rows);
    const auto y_train = pick(targets, train_rows);
    const auto g_train = pick<std::string>(groups, train_rows);
    const auto tuned = tune_and_train(x_train, y_train, g_train, cfg,
                                      derive_seed(cfg.seed, label, f), 1);
    out.fold_fingerprints[f] = gbtree::fingerprint(tuned.ensemble);
    fold_pred[f] = gbtree::predict(tuned.ensemble, x.select_rows(fold_rows[f]));
  });
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    out.fold_groups.push_back(plan.folds[f].test_groups.front());
    for (std::size_t i = 0; i < fold_rows[f].size(); ++i) {
      out.oof_predictions[fold_rows[f][i]] = fold_pred[f][i];
    }
  }
  out.eval = summarize(out.oof_predictions, targets, groups);
  out.final = fit_final(rows, targets, cfg, label);
  return out;
}

ModelResult fit_control_model(const Dataset& data, const PipelineConfig& cfg) {
  const auto control = data.select_rows(data.rows_with(Condition::kControl));
  const auto change = tabular::outcome_change(control);
  return fit_model(control, change, cfg, "model1");
}

ResidualLabels counterfactual_residuals(const gbtree::Ensemble& model1, const Dataset& treated,
                                        const tabular::ImputePlan& plan,
                                        const PipelineConfig& cfg) {
  for (const auto c : treated.conditions()) {
    if (c != Condition::kTreatment) {
      fail(ErrorCode::kBadInputs, "counterfactual residuals need treatment rows only");
    }
  }
  ResidualLabels out;
  out.actual_change = tabular::outcome_change(treated);
  out.predicted_change = gbtree::predict(model1, encode(treated, plan, cfg));
  out.residual.resize(out.actual_change.size());
  for (std::size_t i = 0; i < out.residual.size(); ++i) {
    out.residual[i] = out.actual_change[i] - out.predicted_change[i];
  }
  return out;
}

ModelResult fit_effect_model(const Dataset& treated, const ResidualLabels& labels,
                             const PipelineConfig& cfg) {
  return fit_model(treated, labels.residual, cfg, "model2");
}

LeakageResult condition_leakage_check(const Dataset& data, const PipelineConfig& cfg) {
  cfg.validate();
  const auto conditions = data.conditions();
  std::vector<double> y(conditions.size());
  std::size_t treated = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = conditions[i] == Condition::kTreatment ? 1.0 : 0.0;
    treated += conditions[i] == Condition::kTreatment;
  }
  if (treated == 0 || treated == y.size()) {
    fail(ErrorCode::kBadInputs, "leakage check needs both conditions present");
  }
  const auto groups = data.groups();
  const auto plan = tuning::make_folds(groups, tuning::FoldMode::kLeaveOneGroupOut);
  std::vector<std::size_t> correct(plan.folds.size(), 0), majority_correct(plan.folds.size(), 0);
  parallel_for(plan.folds.size(), cfg.threads, [&](std::size_t f) {
    const auto train_rows = tuning::rows_in(groups, plan.folds[f].train_groups);
    const auto test_rows = tuning::rows_in(groups, plan.folds[f].test_groups);
    // No-skill reference: the training fold's majority class, thresholded
    // like the classifier. Holding a school out tilts the training balance
    // against it, so this sits below the pooled majority rate when classes
    // are near even.
    double train_treated = 0.0;
    for (const auto r : train_rows) train_treated += y[r];
    const double majority = train_treated / static_cast<double>(train_rows.size()) >= 0.5 ? 1.0 : 0.0;
    for (const auto r : test_rows) majority_correct[f] += majority == y[r];
    const auto x = encode(data, fold_plan(data, train_rows, cfg), cfg);
    auto hp = cfg.leakage_hp;
    hp.seed = derive_seed(cfg.seed, "leakage", f);
    const auto model = gbtree::train(x.select_rows(train_rows), pick<double>(y, train_rows), hp);
    const auto pred = gbtree::predict(model, x.select_rows(test_rows));
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      correct[f] += (pred[i] >= 0.5 ? 1.0 : 0.0) == y[test_rows[i]];
    }
  });
  LeakageResult out;
  out.n = y.size();
  std::size_t hits = 0, majority_hits = 0;
  for (std::size_t f = 0; f < correct.size(); ++f) {
    hits += correct[f];
    majority_hits += majority_correct[f];
  }
  out.accuracy = static_cast<double>(hits) / static_cast<double>(out.n);
  out.base_rate = static_cast<double>(majority_hits) / static_cast<double>(out.n);
  out.p_value = stats::binomial_two_sided_p(hits, out.n, out.base_rate);
  return out;
}

// ---------------------------------------------------------------------------

tuning::EvalSummary ols_baseline(const Dataset& rows, std::span<const double> targets,
                                 const PipelineConfig& cfg) {
  check_targets(rows, targets);
  const auto groups = rows.groups();
  const auto plan = tuning::make_folds(groups, tuning::FoldMode::kLeaveOneGroupOut);
  std::vector<double> pred(rows.row_count(), 0.0);
  parallel_for(plan.folds.size(), cfg.threads, [&](std::size_t f) {
    const auto train_rows = tuning::rows_in(groups, plan.folds[f].train_groups);
    const auto test_rows = tuning::rows_in(groups, plan.folds[f].test_groups);
    const auto x = encode(rows, fold_plan(rows, train_rows, cfg), cfg);

    std::vector<std::size_t> keep;
    std::set<std::string> seen_groups;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const bool indicator = !x.category()[c].empty();
      if (indicator && seen_groups.insert(x.origin()[c]).second) continue;
      keep.push_back(c);
    }
    if (keep.empty()) fail(ErrorCode::kDegenerateDesign, "no usable columns for least squares");

    const auto design = [&](std::span<const std::size_t> which) {
      Eigen::MatrixXd a(static_cast<Eigen::Index>(which.size()),
                        static_cast<Eigen::Index>(keep.size() + 1));
      for (std::size_t i = 0; i < which.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        a(r, 0) = 1.0;
        for (std::size_t j = 0; j < keep.size(); ++j) {
          a(r, static_cast<Eigen::Index>(j + 1)) = x(which[i], keep[j]);
        }
      }
      return a;
    };
    const Eigen::MatrixXd a = design(train_rows);
    Eigen::VectorXd b(static_cast<Eigen::Index>(train_rows.size()));
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      b(static_cast<Eigen::Index>(i)) = targets[train_rows[i]];
    }
    const Eigen::VectorXd beta = a.completeOrthogonalDecomposition().solve(b);
    const Eigen::VectorXd fitted = design(test_rows) * beta;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      pred[test_rows[i]] = fitted(static_cast<Eigen::Index>(i));
    }
  });
  return summarize(pred, targets, groups);
}

std::vector<CurvePoint> learning_curve(const Dataset& rows, std::span<const double> targets,
                                       const PipelineConfig& cfg,
                                       std::span<const std::size_t> k_values,
                                       std::size_t repeats) {
  cfg.validate();
  check_targets(rows, targets);
  const auto groups = rows.groups();
  std::vector<tuning::FoldPlan> plans;
  for (const auto k : k_values) {
    plans.push_back(tuning::make_folds(groups, tuning::FoldMode::kLeaveKGroupsIn, k, repeats,
                                       derive_seed(cfg.seed, "curve", k)));
  }
  std::vector<CurvePoint> out(k_values.size());
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    out[i].k = k_values[i];
    out[i].per_repeat_r.assign(repeats, std::numeric_limits<double>::quiet_NaN());
  }
  parallel_for(k_values.size() * repeats, cfg.threads, [&](std::size_t job) {
    const std::size_t i = job / repeats;
    const std::size_t r = job % repeats;
    const auto& fold = plans[i].folds[r];
    const auto train_rows = tuning::rows_in(groups, fold.train_groups);
    const auto test_rows = tuning::rows_in(groups, fold.test_groups);
    const auto x = encode(rows, fold_plan(rows, train_rows, cfg), cfg);
    auto hp = cfg.curve_hp;
    hp.seed = derive_seed(cfg.seed, "curve_trees", job);
    const auto model = gbtree::train(x.select_rows(train_rows), pick(targets, train_rows), hp);
    const auto pred = gbtree::predict(model, x.select_rows(test_rows));
    const auto summary = summarize(pred, pick(targets, test_rows), pick<std::string>(groups, test_rows));
    if (!summary.per_fold_r.empty()) out[i].per_repeat_r[r] = summary.mean_r;
  });
  for (auto& point : out) {
    std::vector<double> defined;
    for (const double r : point.per_repeat_r) {
      if (!std::isnan(r)) defined.push_back(r);
    }
    point.mean_r = defined.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(defined);
  }
  return out;
}

std::optional<double> importance_correlation(const shapley::ImportanceTable& a,
                                             const shapley::ImportanceTable& b) {
  std::vector<std::string> names;
  for (const auto& row : a.rows) names.push_back(row.feature);
  for (const auto& row : b.rows) {
    if (!a.find(row.feature)) names.push_back(row.feature);
  }
  std::vector<double> va, vb;
  for (const auto& name : names) {
    const auto* ra = a.find(name);
    const auto* rb = b.find(name);
    va.push_back(ra ? ra->mean_abs_phi : 0.0);
    vb.push_back(rb ? rb->mean_abs_phi : 0.0);
  }
  return stats::pearson(va, vb);
}

StabilityResult compare_halves(const Dataset& half_a, std::span<const double> labels_a,
                               const Dataset& half_b, std::span<const double> labels_b,
                               const PipelineConfig& cfg) {
  StabilityResult out;
  out.importance_a = fit_final(half_a, labels_a, cfg, "model2").importance;
  out.importance_b = fit_final(half_b, labels_b, cfg, "model2").importance;
  out.importance_correlation = importance_correlation(out.importance_a, out.importance_b);
  const auto ga = half_a.groups();
  const auto gb = half_b.groups();
  std::set<std::string> sa(ga.begin(), ga.end()), sb(gb.begin(), gb.end());
  out.groups_a.assign(sa.begin(), sa.end());
  out.groups_b.assign(sb.begin(), sb.end());
  return out;
}

StabilityResult split_sample_stability(const Dataset& treated, const ResidualLabels& labels,
                                       const PipelineConfig& cfg) {
  cfg.validate();
  check_targets(treated, labels.residual);
  const auto groups = treated.groups();
  std::set<std::string> unique(groups.begin(), groups.end());
  if (unique.size() < 4) {
    fail(ErrorCode::kTooFewGroups,
         "split-sample stability needs at least 4 groups, got " + std::to_string(unique.size()));
  }
  std::vector<std::string> shuffled(unique.begin(), unique.end());
  auto rng = make_rng(cfg.seed, "split_half");
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto mid = shuffled.begin() + static_cast<std::ptrdiff_t>(shuffled.size() / 2);
  std::vector<std::string> a(shuffled.begin(), mid), b(mid, shuffled.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto rows_a = tuning::rows_in(groups, a);
  const auto rows_b = tuning::rows_in(groups, b);
  return compare_halves(treated.select_rows(rows_a), pick<double>(labels.residual, rows_a),
                        treated.select_rows(rows_b), pick<double>(labels.residual, rows_b), cfg);
}

gbtree::Hyperparams overfit_hyperparams() {
  return {.max_depth = 8,
          .subsample = 1.0,
          .min_leaf = 1,
          .colsample = 1.0,
          .eta = 0.32,
          .gamma = 0.0,
          .n_trees = 500};
}

OverfitResult overfit_probe(const Dataset& rows, std::span<const double> targets,
                            const PipelineConfig& cfg, const gbtree::Hyperparams& hp) {
  cfg.validate();
  hp.validate();
  check_targets(rows, targets);
  OverfitResult out;
  {
    auto fixed = hp;
    fixed.seed = derive_seed(cfg.seed, "probe");
    const auto x = encode(rows, tabular::fit_impute(rows), cfg);
    const auto model = gbtree::train(x, targets, fixed);
    out.train_r = stats::pearson(gbtree::predict(model, x), targets);
  }
  const auto groups = rows.groups();
  const auto plan = tuning::make_folds(groups, tuning::FoldMode::kLeaveOneGroupOut);
  std::vector<double> pred(rows.row_count(), 0.0);
  parallel_for(plan.folds.size(), cfg.threads, [&](std::size_t f) {
    const auto train_rows = tuning::rows_in(groups, plan.folds[f].train_groups);
    const auto test_rows = tuning::rows_in(groups, plan.folds[f].test_groups);
    const auto x = encode(rows, fold_plan(rows, train_rows, cfg), cfg);
    auto fixed = hp;
    fixed.seed = derive_seed(cfg.seed, "probe", f + 1);
    const auto model = gbtree::train(x.select_rows(train_rows), pick(targets, train_rows), fixed);
    const auto p = gbtree::predict(model, x.select_rows(test_rows));
    for (std::size_t i = 0; i < test_rows.size(); ++i) pred[test_rows[i]] = p[i];
  });
  out.heldout = summarize(pred, targets, groups);
  if (!out.heldout.per_fold_r.empty()) out.heldout_r = out.heldout.mean_r;
  return out;
}

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult out;
  const auto control = data.select_rows(data.rows_with(Condition::kControl));
  const auto treated = data.select_rows(data.rows_with(Condition::kTreatment));
  out.n_control = control.row_count();
  out.n_treated = treated.row_count();

  out.model1 = fit_control_model(data, cfg);
  out.residuals = counterfactual_residuals(out.model1.final.ensemble, treated,
                                           out.model1.final.plan, cfg);
  out.model2 = fit_effect_model(treated, out.residuals, cfg);

  out.residual_summary.n = out.residuals.residual.size();
  out.residual_summary.mean = stats::mean(out.residuals.residual);
  out.residual_summary.sd = stats::sample_sd(out.residuals.residual);
  out.effect = tuning::effect_stats(tabular::outcome_change(control), out.residuals.actual_change);
  out.leakage = condition_leakage_check(data, cfg);
  return out;
}

}  // namespace hte::twomodel
