#include "hte/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>

#include "hte/error.hpp"
#include "hte/parallel.hpp"
#include "hte/random.hpp"
#include "hte/stats.hpp"

namespace hte::tuning {

namespace {

std::vector<std::string> distinct_sorted(std::span<const std::string> groups) {
  std::set<std::string> unique(groups.begin(), groups.end());
  return {unique.begin(), unique.end()};
}

std::vector<std::string> complement(const std::vector<std::string>& all,
                                    const std::vector<std::string>& subset) {
  std::vector<std::string> out;
  std::set_difference(all.begin(), all.end(), subset.begin(), subset.end(),
                      std::back_inserter(out));
  return out;
}

}  // namespace

std::string_view to_string(FoldMode mode) {
  switch (mode) {
    case FoldMode::kLeaveOneGroupOut: return "leave_one_group_out";
    case FoldMode::kLeaveKGroupsIn: return "leave_k_groups_in";
    case FoldMode::kKFoldGrouped: return "k_fold_grouped";
  }
  return "unknown";
}

FoldPlan make_folds(std::span<const std::string> groups, FoldMode mode, std::size_t k,
                    std::size_t repeats, std::uint64_t seed) {
  const auto all = distinct_sorted(groups);
  if (all.size() < 2) {
    fail(ErrorCode::kTooFewGroups,
         "need at least 2 distinct groups, got " + std::to_string(all.size()));
  }
  FoldPlan plan;
  plan.mode = mode;
  switch (mode) {
    case FoldMode::kLeaveOneGroupOut:
      for (const auto& g : all) {
        Fold fold;
        fold.test_groups = {g};
        fold.train_groups = complement(all, fold.test_groups);
        plan.folds.push_back(std::move(fold));
      }
      break;
    case FoldMode::kLeaveKGroupsIn:
      if (k < 1 || k > all.size() - 1) {
        fail(ErrorCode::kBadK, "k must lie in [1, " + std::to_string(all.size() - 1) +
                                   "], got " + std::to_string(k));
      }
      for (std::size_t r = 0; r < repeats; ++r) {
        auto rng = make_rng(seed, "leave_k_groups_in", r);
        Fold fold;
        std::sample(all.begin(), all.end(), std::back_inserter(fold.train_groups), k, rng);
        fold.test_groups = complement(all, fold.train_groups);
        plan.folds.push_back(std::move(fold));
      }
      break;
    case FoldMode::kKFoldGrouped: {
      if (k < 2 || k > all.size()) {
        fail(ErrorCode::kBadK, "k must lie in [2, " + std::to_string(all.size()) + "], got " +
                                   std::to_string(k));
      }
      auto shuffled = all;
      auto rng = make_rng(seed, "k_fold_grouped");
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      for (std::size_t b = 0; b < k; ++b) {
        Fold fold;
        for (std::size_t i = b; i < shuffled.size(); i += k) fold.test_groups.push_back(shuffled[i]);
        std::sort(fold.test_groups.begin(), fold.test_groups.end());
        fold.train_groups = complement(all, fold.test_groups);
        plan.folds.push_back(std::move(fold));
      }
      break;
    }
  }
  return plan;
}

std::vector<std::size_t> rows_in(std::span<const std::string> groups,
                                 std::span<const std::string> members) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (std::binary_search(members.begin(), members.end(), groups[i])) rows.push_back(i);
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::kMaxDepth: return "max_depth";
    case Axis::kSubsample: return "subsample";
    case Axis::kMinLeaf: return "min_leaf";
    case Axis::kColsample: return "colsample";
    case Axis::kEta: return "eta";
    case Axis::kGamma: return "gamma";
  }
  return "unknown";
}

double axis_value(const gbtree::Hyperparams& hp, Axis axis) {
  switch (axis) {
    case Axis::kMaxDepth: return hp.max_depth;
    case Axis::kSubsample: return hp.subsample;
    case Axis::kMinLeaf: return hp.min_leaf;
    case Axis::kColsample: return hp.colsample;
    case Axis::kEta: return hp.eta;
    case Axis::kGamma: return hp.gamma;
  }
  return 0.0;
}

void set_axis(gbtree::Hyperparams& hp, Axis axis, double value) {
  switch (axis) {
    case Axis::kMaxDepth: hp.max_depth = static_cast<int>(std::lround(value)); break;
    case Axis::kSubsample: hp.subsample = value; break;
    case Axis::kMinLeaf: hp.min_leaf = static_cast<int>(std::lround(value)); break;
    case Axis::kColsample: hp.colsample = value; break;
    case Axis::kEta: hp.eta = value; break;
    case Axis::kGamma: hp.gamma = value; break;
  }
}

Grid Grid::paper() {
  Grid g;
  g.axis_ref(Axis::kMaxDepth) = {1, 2, 3, 4, 5, 6, 7, 8};
  g.axis_ref(Axis::kSubsample) = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  g.axis_ref(Axis::kMinLeaf) = {1, 2, 4, 8, 16, 32, 64, 128};
  g.axis_ref(Axis::kColsample) = {0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  g.axis_ref(Axis::kEta) = {0.01, 0.02, 0.04, 0.08, 0.16, 0.32};
  g.axis_ref(Axis::kGamma) = {0, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 1.28, 2.56, 5.12, 10.24};
  return g;
}

std::size_t Grid::combinations() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.size();
  return n;
}

void Grid::validate() const {
  for (const Axis a : kAxisOrder) {
    const auto& values = axis(a);
    if (values.empty()) fail(ErrorCode::kBadConfig, "grid axis " + std::string(to_string(a)) + " is empty");
    for (const double v : values) {
      gbtree::Hyperparams hp;
      set_axis(hp, a, v);
      if (!std::isfinite(v) || axis_value(hp, a) != v) {
        fail(ErrorCode::kBadConfig, "grid axis " + std::string(to_string(a)) +
                                        " holds invalid value " + stats::format_double(v));
      }
      hp.validate();
    }
  }
}

nlohmann::json to_json(const Grid& grid) {
  nlohmann::json doc = nlohmann::json::object();
  for (const Axis a : kAxisOrder) doc[std::string(to_string(a))] = grid.axis(a);
  return doc;
}

Grid grid_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kBadConfig, "grid must be a JSON object");
  Grid grid = Grid::paper();
  for (const auto& [key, value] : doc.items()) {
    bool known = false;
    for (const Axis a : kAxisOrder) {
      if (key != to_string(a)) continue;
      known = true;
      if (!value.is_array()) fail(ErrorCode::kBadConfig, "grid axis " + key + " must be an array");
      std::vector<double> values;
      for (const auto& v : value) {
        if (!v.is_number()) fail(ErrorCode::kBadConfig, "grid axis " + key + " must hold numbers");
        values.push_back(v.get<double>());
      }
      grid.axis_ref(a) = std::move(values);
    }
    if (!known) fail(ErrorCode::kBadConfig, "unknown grid key: " + key);
  }
  grid.validate();
  return grid;
}

gbtree::Hyperparams start_point(const Grid& grid, const gbtree::Hyperparams& base) {
  const gbtree::Hyperparams defaults{};
  gbtree::Hyperparams hp = base;
  for (const Axis a : kAxisOrder) {
    const auto& values = grid.axis(a);
    if (values.empty()) fail(ErrorCode::kBadConfig, "grid axis " + std::string(to_string(a)) + " is empty");
    const double target = axis_value(defaults, a);
    double best = values.front();
    for (const double v : values) {
      const double d = std::abs(v - target);
      const double d_best = std::abs(best - target);
      if (d < d_best || (d == d_best && v < best)) best = v;
    }
    set_axis(hp, a, best);
  }
  return hp;
}

std::string trace_csv(const TuneTrace& trace) {
  std::string out = "pass,axis,candidate,inner_rmse,accepted\n";
  for (const auto& s : trace.steps) {
    out += std::to_string(s.pass) + ',' + std::string(to_string(s.axis)) + ',' +
           stats::format_double(s.candidate) + ',' + stats::format_double(s.inner_rmse) + ',' +
           (s.accepted ? "true" : "false") + '\n';
  }
  return out;
}

TuneTrace coordinate_search(const Grid& grid, const gbtree::Hyperparams& start,
                            const Scorer& score, int passes, int threads) {
  if (passes < 1) fail(ErrorCode::kBadConfig, "passes must be at least 1");
  grid.validate();

  using Key = std::array<double, kAxisCount>;
  const auto key_of = [](const gbtree::Hyperparams& hp) {
    Key key{};
    for (std::size_t i = 0; i < kAxisCount; ++i) key[i] = axis_value(hp, kAxisOrder[i]);
    return key;
  };
  std::map<Key, double> memo;

  TuneTrace trace;
  gbtree::Hyperparams incumbent = start;
  for (int pass = 1; pass <= passes; ++pass) {
    bool changed = false;
    for (const Axis a : kAxisOrder) {
      const auto& values = grid.axis(a);
      std::vector<gbtree::Hyperparams> candidates;
      for (const double v : values) {
        auto hp = incumbent;
        set_axis(hp, a, v);
        candidates.push_back(hp);
      }
      candidates.push_back(incumbent);

      std::vector<std::size_t> todo;
      std::set<Key> queued;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Key key = key_of(candidates[i]);
        if (!memo.contains(key) && queued.insert(key).second) todo.push_back(i);
      }
      std::vector<double> fresh(todo.size());
      parallel_for(todo.size(), threads,
                   [&](std::size_t j) { fresh[j] = score(candidates[todo[j]]); });
      for (std::size_t j = 0; j < todo.size(); ++j) memo[key_of(candidates[todo[j]])] = fresh[j];

      const double incumbent_score = memo.at(key_of(incumbent));
      std::size_t best = 0;
      for (std::size_t i = 1; i < values.size(); ++i) {
        if (memo.at(key_of(candidates[i])) < memo.at(key_of(candidates[best]))) best = i;
      }
      if (memo.at(key_of(candidates[best])) < incumbent_score) {
        incumbent = candidates[best];
        changed = true;
      }
      const double kept = axis_value(incumbent, a);
      for (std::size_t i = 0; i < values.size(); ++i) {
        trace.steps.push_back(TuneStep{pass, a, values[i], memo.at(key_of(candidates[i])),
                                       values[i] == kept});
      }
    }
    if (!changed) break;
  }
  trace.final = incumbent;
  return trace;
}

// ---------------------------------------------------------------------------

std::vector<RowSplit> inner_splits(std::span<const std::string> groups, std::size_t inner_folds,
                                   std::uint64_t seed) {
  if (inner_folds < 2) fail(ErrorCode::kBadConfig, "inner_folds must be at least 2");
  const auto all = distinct_sorted(groups);
  std::vector<RowSplit> splits;
  if (all.size() >= 2) {
    const auto plan =
        make_folds(groups, FoldMode::kKFoldGrouped, std::min(inner_folds, all.size()), 1, seed);
    for (const auto& fold : plan.folds) {
      splits.push_back({rows_in(groups, fold.train_groups), rows_in(groups, fold.test_groups)});
    }
    return splits;
  }
  if (groups.size() < 2) fail(ErrorCode::kTooFewGroups, "need at least 2 rows for inner validation");
  const std::size_t k = std::min(inner_folds, groups.size());
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto rng = make_rng(seed, "row_folds");
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t b = 0; b < k; ++b) {
    RowSplit split;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i % k == b ? split.test : split.train).push_back(order[i]);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    splits.push_back(std::move(split));
  }
  return splits;
}

namespace {

// Training and validation matrices for one split, presorted once and reused
// for every configuration scored on it.
struct PreparedSplit {
  FeatureMatrix train;
  std::vector<double> train_y;
  FeatureMatrix test;
  std::vector<double> test_y;
  std::unique_ptr<gbtree::PresortedMatrix> sorted;
};

std::vector<std::unique_ptr<PreparedSplit>> prepare(const FeatureMatrix& matrix,
                                                    std::span<const double> targets,
                                                    std::span<const RowSplit> splits) {
  if (targets.size() != matrix.rows()) {
    fail(ErrorCode::kLengthMismatch, "targets length differs from matrix rows");
  }
  std::vector<std::unique_ptr<PreparedSplit>> out;
  for (const auto& split : splits) {
    auto p = std::make_unique<PreparedSplit>();
    p->train = matrix.select_rows(split.train);
    p->test = matrix.select_rows(split.test);
    for (const auto r : split.train) p->train_y.push_back(targets[r]);
    for (const auto r : split.test) p->test_y.push_back(targets[r]);
    p->sorted = std::make_unique<gbtree::PresortedMatrix>(p->train);
    out.push_back(std::move(p));
  }
  return out;
}

double prepared_rmse(const std::vector<std::unique_ptr<PreparedSplit>>& prepared,
                     const gbtree::Hyperparams& hp) {
  double total = 0.0;
  for (const auto& p : prepared) {
    const auto model = gbtree::train(*p->sorted, p->train_y, hp);
    total += rmse(gbtree::predict(model, p->test), p->test_y);
  }
  return total / static_cast<double>(prepared.size());
}

}  // namespace

double inner_cv_rmse(const FeatureMatrix& matrix, std::span<const double> targets,
                     std::span<const RowSplit> splits, const gbtree::Hyperparams& hp) {
  if (splits.empty()) fail(ErrorCode::kEmpty, "no inner splits");
  return prepared_rmse(prepare(matrix, targets, splits), hp);
}

TuneTrace coordinate_descent(const FeatureMatrix& matrix, std::span<const double> targets,
                             std::span<const std::string> groups, const Grid& grid,
                             const gbtree::Hyperparams& base, const TuneOptions& options) {
  if (groups.size() != matrix.rows()) {
    fail(ErrorCode::kLengthMismatch, "groups length differs from matrix rows");
  }
  const auto splits = inner_splits(groups, options.inner_folds, options.seed);
  const auto prepared = prepare(matrix, targets, splits);
  const Scorer scorer = [&](const gbtree::Hyperparams& hp) { return prepared_rmse(prepared, hp); };
  return coordinate_search(grid, start_point(grid, base), scorer, options.passes, options.threads);
}

std::vector<double> staged_rmse(const gbtree::Ensemble& model, const FeatureMatrix& matrix,
                                std::span<const double> targets) {
  if (targets.size() != matrix.rows()) {
    fail(ErrorCode::kLengthMismatch, "targets length differs from matrix rows");
  }
  if (matrix.rows() == 0) fail(ErrorCode::kEmpty, "no rows to evaluate");
  std::vector<double> pred(matrix.rows(), model.base_score);
  std::vector<double> curve;
  curve.reserve(model.trees.size());
  for (const auto& tree : model.trees) {
    for (std::size_t r = 0; r < matrix.rows(); ++r) pred[r] += tree.predict(matrix.row(r));
    curve.push_back(rmse(pred, targets));
  }
  return curve;
}

TreeCountResult tune_tree_count(const FeatureMatrix& matrix, std::span<const double> targets,
                                std::span<const std::string> groups,
                                const gbtree::Hyperparams& hp, int max_trees,
                                const TuneOptions& options) {
  if (max_trees < 1 || max_trees > gbtree::kMaxTrees) {
    fail(ErrorCode::kBadConfig, "max_trees must lie in [1, 500]");
  }
  if (groups.size() != matrix.rows()) {
    fail(ErrorCode::kLengthMismatch, "groups length differs from matrix rows");
  }
  const auto splits = inner_splits(groups, options.inner_folds, options.seed);
  const auto prepared = prepare(matrix, targets, splits);
  auto full = hp;
  full.n_trees = max_trees;

  std::vector<std::vector<double>> curves(prepared.size());
  parallel_for(prepared.size(), options.threads, [&](std::size_t f) {
    const auto model = gbtree::train(*prepared[f]->sorted, prepared[f]->train_y, full);
    curves[f] = staged_rmse(model, prepared[f]->test, prepared[f]->test_y);
  });

  TreeCountResult result;
  result.mean_rmse.assign(static_cast<std::size_t>(max_trees), 0.0);
  for (const auto& c : curves) {
    for (std::size_t t = 0; t < c.size(); ++t) result.mean_rmse[t] += c[t];
  }
  for (auto& v : result.mean_rmse) v /= static_cast<double>(curves.size());
  std::size_t best = 0;
  for (std::size_t t = 1; t < result.mean_rmse.size(); ++t) {
    if (result.mean_rmse[t] < result.mean_rmse[best]) best = t;
  }
  result.best = static_cast<int>(best) + 1;
  return result;
}

// ---------------------------------------------------------------------------

double rmse(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size()) {
    fail(ErrorCode::kLengthMismatch, "rmse inputs have lengths " + std::to_string(pred.size()) +
                                         " and " + std::to_string(actual.size()));
  }
  if (pred.empty()) fail(ErrorCode::kEmpty, "rmse of empty vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred.size()));
}

nlohmann::json to_json(const EvalSummary& s) {
  nlohmann::json folds = nlohmann::json::array();
  for (std::size_t i = 0; i < s.per_fold_r.size(); ++i) {
    folds.push_back({{"group", s.fold_groups[i]}, {"r", s.per_fold_r[i]}});
  }
  return {{"per_fold_r", folds},     {"skipped_folds", s.skipped_folds},
          {"mean_r", s.mean_r},      {"variance_explained", s.variance_explained},
          {"p_value", s.p_value},    {"rmse", s.rmse}};
}

EvalSummary per_group_r(std::span<const double> pred, std::span<const double> actual,
                        std::span<const std::string> groups) {
  if (pred.size() != actual.size() || pred.size() != groups.size()) {
    fail(ErrorCode::kLengthMismatch, "per_group_r inputs differ in length");
  }
  if (pred.empty()) fail(ErrorCode::kEmpty, "per_group_r of empty vectors");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_group;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& [p, a] = by_group[groups[i]];
    p.push_back(pred[i]);
    a.push_back(actual[i]);
  }
  EvalSummary s;
  for (const auto& [g, pa] : by_group) {
    const auto r = pa.first.size() < 3 ? std::nullopt : stats::pearson(pa.first, pa.second);
    if (!r) {
      ++s.skipped_folds;
      continue;
    }
    s.fold_groups.push_back(g);
    s.per_fold_r.push_back(*r);
  }
  if (s.per_fold_r.empty()) fail(ErrorCode::kNoDefinedFolds, "every group has undefined r");
  s.mean_r = stats::mean(s.per_fold_r);
  s.variance_explained = s.mean_r * s.mean_r;
  s.p_value = stats::one_sample_t_p(s.per_fold_r);
  s.rmse = rmse(pred, actual);
  return s;
}

bool significantly_positive(const EvalSummary& summary, double alpha) {
  return summary.mean_r > 0.0 && summary.p_value < alpha;
}

nlohmann::json to_json(const EffectStats& e) {
  return {{"mean_diff", e.mean_diff}, {"cohens_d", e.cohens_d}, {"p_value", e.p_value}};
}

EffectStats effect_stats(std::span<const double> control, std::span<const double> treatment) {
  if (control.size() < 2 || treatment.size() < 2) {
    fail(ErrorCode::kEmpty, "effect_stats needs at least 2 values per sample");
  }
  const double na = static_cast<double>(control.size());
  const double nb = static_cast<double>(treatment.size());
  const double pooled = std::sqrt(((na - 1.0) * stats::sample_variance(control) +
                                   (nb - 1.0) * stats::sample_variance(treatment)) /
                                  (na + nb - 2.0));
  if (!(pooled > 0.0)) fail(ErrorCode::kZeroVariance, "pooled standard deviation is zero");
  EffectStats e;
  e.mean_diff = stats::mean(treatment) - stats::mean(control);
  e.cohens_d = e.mean_diff / pooled;
  e.p_value = stats::welch_t_p(control, treatment);
  return e;
}

}  // namespace hte::tuning
