#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hte/gbtree.hpp"
#include "hte/shapley.hpp"
#include "hte/tabular.hpp"
#include "hte/tuning.hpp"

namespace hte::twomodel {

enum class ImputeScope { kFold, kGlobal };

std::string_view to_string(ImputeScope scope);

struct PipelineConfig {
  std::string schema;  // optional path, used by the command line
  tuning::Grid grid = tuning::Grid::paper();
  std::size_t inner_folds = 5;
  int passes = 5;
  ImputeScope impute_scope = ImputeScope::kFold;
  std::uint64_t seed = 0;
  int max_trees = gbtree::kMaxTrees;
  int search_trees = 100;  // trees per configuration during the grid search
  double lambda = 1.0;
  bool include_pre_outcome = true;
  /// Fixed configuration of the condition classifier.
  gbtree::Hyperparams leakage_hp{.max_depth = 3, .min_leaf = 32, .eta = 0.32, .gamma = 10.24,
                                 .n_trees = 50};
  /// Fixed configuration for the learning curve.
  gbtree::Hyperparams curve_hp{.max_depth = 3, .min_leaf = 16, .eta = 0.04, .n_trees = 200};
  std::size_t dependence_top = 5;
  int threads = 1;

  void validate() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const PipelineConfig& cfg);

/// Hex hash of the canonical config JSON without the thread count.
std::string config_hash(const PipelineConfig& cfg);

/// Tuned model trained on every row it was given.
struct FinalModel {
  tabular::ImputePlan plan;
  FeatureMatrix matrix;  // encoded training rows
  gbtree::Ensemble ensemble;
  tuning::TuneTrace trace;
  int tree_count = 1;
  std::vector<shapley::ShapleyRow> phis;
  shapley::ImportanceTable importance;
};

struct ModelResult {
  FinalModel final;
  tuning::EvalSummary eval;
  std::vector<double> oof_predictions;  // held-out prediction per row
  std::vector<std::string> fold_groups;
  std::vector<std::uint64_t> fold_fingerprints;
};

/// Tune (coordinate descent, then tree count) and train on all rows.
FinalModel fit_final(const tabular::Dataset& rows, std::span<const double> targets,
                     const PipelineConfig& cfg, std::string_view label);

/// Outer leave-one-group-out estimate of accuracy followed by fit_final.
/// Every fold is imputed, tuned and trained on its training groups only.
ModelResult fit_model(const tabular::Dataset& rows, std::span<const double> targets,
                      const PipelineConfig& cfg, std::string_view label);

/// Model 1: control rows, raw outcome change.
ModelResult fit_control_model(const tabular::Dataset& data, const PipelineConfig& cfg);

struct ResidualLabels {
  std::vector<double> actual_change;
  std::vector<double> predicted_change;
  std::vector<double> residual;
};

ResidualLabels counterfactual_residuals(const gbtree::Ensemble& model1,
                                        const tabular::Dataset& treated,
                                        const tabular::ImputePlan& plan,
                                        const PipelineConfig& cfg);

/// Model 2: treated rows, residual labels.
ModelResult fit_effect_model(const tabular::Dataset& treated, const ResidualLabels& labels,
                             const PipelineConfig& cfg);

struct LeakageResult {
  double accuracy = 0.0;
  /// Held-out accuracy of predicting each training fold's majority class
  /// under the same folds; the binomial test is against this rate.
  double base_rate = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

LeakageResult condition_leakage_check(const tabular::Dataset& data, const PipelineConfig& cfg);

/// Least squares on the encoded features plus an intercept, the first
/// indicator of every one-hot group dropped, evaluated with the same outer
/// leave-one-group-out folds as the boosted models.
tuning::EvalSummary ols_baseline(const tabular::Dataset& rows, std::span<const double> targets,
                                 const PipelineConfig& cfg);

struct CurvePoint {
  std::size_t k = 0;
  std::vector<double> per_repeat_r;  // NaN where no held-out group had a defined r
  double mean_r = 0.0;
};

std::vector<CurvePoint> learning_curve(const tabular::Dataset& rows,
                                       std::span<const double> targets, const PipelineConfig& cfg,
                                       std::span<const std::size_t> k_values,
                                       std::size_t repeats = 10);

struct StabilityResult {
  std::vector<std::string> groups_a;
  std::vector<std::string> groups_b;
  shapley::ImportanceTable importance_a;
  shapley::ImportanceTable importance_b;
  std::optional<double> importance_correlation;
};

/// Pearson r of mean_abs_phi aligned by feature name (features absent from
/// one table count as 0 there).
std::optional<double> importance_correlation(const shapley::ImportanceTable& a,
                                             const shapley::ImportanceTable& b);

/// Fits model 2 on two given row sets with identical configuration and
/// correlates their importance tables.
StabilityResult compare_halves(const tabular::Dataset& half_a, std::span<const double> labels_a,
                               const tabular::Dataset& half_b, std::span<const double> labels_b,
                               const PipelineConfig& cfg);

/// Seeded half split of the treated groups, then compare_halves.
StabilityResult split_sample_stability(const tabular::Dataset& treated,
                                       const ResidualLabels& labels, const PipelineConfig& cfg);

/// Regularization effectively off: depth 8, min_leaf 1, gamma 0, full row
/// and column sampling, eta .32, 500 trees.
gbtree::Hyperparams overfit_hyperparams();

struct OverfitResult {
  std::optional<double> train_r;  // nullopt for constant predictions
  std::optional<double> heldout_r;
  tuning::EvalSummary heldout;
};

OverfitResult overfit_probe(const tabular::Dataset& rows, std::span<const double> targets,
                            const PipelineConfig& cfg,
                            const gbtree::Hyperparams& hp = overfit_hyperparams());

struct ResidualSummary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

struct PipelineResult {
  ModelResult model1;
  ModelResult model2;
  ResidualLabels residuals;
  ResidualSummary residual_summary;
  tuning::EffectStats effect;
  LeakageResult leakage;
  std::size_t n_control = 0;
  std::size_t n_treated = 0;
};

/// The full two-model procedure on one dataset.
PipelineResult run_pipeline(const tabular::Dataset& data, const PipelineConfig& cfg);

}  // namespace hte::twomodel
