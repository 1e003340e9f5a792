#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hte/gbtree.hpp"
#include "hte/matrix.hpp"

namespace hte::tuning {

// ---------------------------------------------------------------------------
// Grouped fold construction

enum class FoldMode { kLeaveOneGroupOut, kLeaveKGroupsIn, kKFoldGrouped };

std::string_view to_string(FoldMode mode);

struct Fold {
  std::vector<std::string> train_groups;  // sorted
  std::vector<std::string> test_groups;   // sorted
};

struct FoldPlan {
  FoldMode mode = FoldMode::kLeaveOneGroupOut;
  std::vector<Fold> folds;
};

/// leave_one_group_out: one fold per distinct group (sorted), k and repeats
/// ignored. leave_k_groups_in: `repeats` folds, each training on k groups
/// drawn without replacement and testing on the rest. k_fold_grouped: groups
/// shuffled by seed and dealt into k near-equal test buckets.
FoldPlan make_folds(std::span<const std::string> groups, FoldMode mode, std::size_t k = 0,
                    std::size_t repeats = 1, std::uint64_t seed = 0);

/// Row indices whose group is in `members` (a sorted group list).
std::vector<std::size_t> rows_in(std::span<const std::string> groups,
                                 std::span<const std::string> members);

// ---------------------------------------------------------------------------
// Hyperparameter grid and coordinate descent

enum class Axis : std::size_t { kMaxDepth, kSubsample, kMinLeaf, kColsample, kEta, kGamma };
inline constexpr std::size_t kAxisCount = 6;
inline constexpr std::array<Axis, kAxisCount> kAxisOrder = {
    Axis::kMaxDepth, Axis::kSubsample, Axis::kMinLeaf, Axis::kColsample, Axis::kEta, Axis::kGamma};

std::string_view to_string(Axis axis);
double axis_value(const gbtree::Hyperparams& hp, Axis axis);
void set_axis(gbtree::Hyperparams& hp, Axis axis, double value);

/// Six ordered candidate lists, searched in kAxisOrder.
struct Grid {
  std::array<std::vector<double>, kAxisCount> axes;

  /// max_depth 1..8; subsample and colsample .5..1; min_leaf 1..128
  /// doubling; eta .01...32 doubling; gamma 0 then .01..10.24 doubling.
  static Grid paper();

  const std::vector<double>& axis(Axis a) const { return axes[static_cast<std::size_t>(a)]; }
  std::vector<double>& axis_ref(Axis a) { return axes[static_cast<std::size_t>(a)]; }
  std::size_t combinations() const;
  void validate() const;
};

nlohmann::json to_json(const Grid& grid);
Grid grid_from_json(const nlohmann::json& doc);

/// Start point: on every axis, the candidate nearest the conventional
/// boosting defaults (depth 6, subsample 1, min_leaf 1, colsample 1,
/// eta .3, gamma 0); ties pick the smaller candidate. Other fields come
/// from `base`.
gbtree::Hyperparams start_point(const Grid& grid, const gbtree::Hyperparams& base = {});

struct TuneStep {
  int pass = 0;
  Axis axis = Axis::kMaxDepth;
  double candidate = 0.0;
  double inner_rmse = 0.0;
  bool accepted = false;  // this candidate is the incumbent after the sweep
};

struct TuneTrace {
  std::vector<TuneStep> steps;
  gbtree::Hyperparams final;
};

std::string trace_csv(const TuneTrace& trace);

using Scorer = std::function<double(const gbtree::Hyperparams&)>;

/// Cycles through the axes `passes` times, holding the other axes at their
/// incumbents and adopting the best candidate only when it strictly beats
/// the incumbent. Stops early after a pass with no change. Scores are
/// memoized per configuration; candidates of one sweep are scored
/// concurrently (the scorer must be thread-safe).
TuneTrace coordinate_search(const Grid& grid, const gbtree::Hyperparams& start,
                            const Scorer& score, int passes, int threads = 1);

struct TuneOptions {
  std::size_t inner_folds = 5;
  int passes = 5;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RowSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Inner validation splits over the given rows: grouped k-fold with
/// k = min(inner_folds, distinct groups). With a single distinct group the
/// rows themselves are dealt into folds.
std::vector<RowSplit> inner_splits(std::span<const std::string> groups, std::size_t inner_folds,
                                   std::uint64_t seed);

/// Mean over splits of validation RMSE for one configuration.
double inner_cv_rmse(const FeatureMatrix& matrix, std::span<const double> targets,
                     std::span<const RowSplit> splits, const gbtree::Hyperparams& hp);

/// Coordinate descent over `grid` scored by inner grouped CV RMSE.
/// `base` supplies lambda, the tree count used while searching, and seed.
TuneTrace coordinate_descent(const FeatureMatrix& matrix, std::span<const double> targets,
                             std::span<const std::string> groups, const Grid& grid,
                             const gbtree::Hyperparams& base, const TuneOptions& options);

struct TreeCountResult {
  int best = 1;
  std::vector<double> mean_rmse;  // index t holds the curve at t + 1 trees
};

/// Trains max_trees trees per inner fold and evaluates every prefix; picks
/// the prefix length with the lowest mean inner RMSE (ties: fewest trees).
TreeCountResult tune_tree_count(const FeatureMatrix& matrix, std::span<const double> targets,
                                std::span<const std::string> groups,
                                const gbtree::Hyperparams& hp, int max_trees,
                                const TuneOptions& options);

/// Validation RMSE after each tree prefix 1..trees.size().
std::vector<double> staged_rmse(const gbtree::Ensemble& model, const FeatureMatrix& matrix,
                                std::span<const double> targets);

// ---------------------------------------------------------------------------
// Metrics

double rmse(std::span<const double> pred, std::span<const double> actual);

struct EvalSummary {
  std::vector<std::string> fold_groups;  // group of each defined r
  std::vector<double> per_fold_r;
  std::size_t skipped_folds = 0;
  double mean_r = 0.0;
  double variance_explained = 0.0;
  double p_value = 1.0;
  double rmse = 0.0;
};

nlohmann::json to_json(const EvalSummary& summary);

/// Pearson r within each group; groups with fewer than 3 rows or a constant
/// vector are skipped and counted. Significance is a one-sample two-sided
/// t-test of the per-group r values against zero.
EvalSummary per_group_r(std::span<const double> pred, std::span<const double> actual,
                        std::span<const std::string> groups);

/// mean_r > 0 and p < alpha.
bool significantly_positive(const EvalSummary& summary, double alpha = 0.05);

struct EffectStats {
  double mean_diff = 0.0;  // treatment - control
  double cohens_d = 0.0;   // pooled (n - 1)-weighted SD
  double p_value = 1.0;    // Welch two-sided
};

nlohmann::json to_json(const EffectStats& stats);

EffectStats effect_stats(std::span<const double> control, std::span<const double> treatment);

}  // namespace hte::tuning
