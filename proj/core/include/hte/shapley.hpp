#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hte/gbtree.hpp"
#include "hte/matrix.hpp"

namespace hte::shapley {

/// Per-instance attribution in outcome units.
/// Local accuracy: base_value + sum(phi) == model prediction.
struct ShapleyRow {
  std::vector<double> phi;  // one entry per matrix column
  double base_value = 0.0;
};

/// Path-dependent TreeSHAP: features outside a coalition are marginalized
/// by following both children weighted by training cover.
ShapleyRow tree_shap(const gbtree::Ensemble& model, std::span<const double> instance);
std::vector<ShapleyRow> tree_shap(const gbtree::Ensemble& model, const FeatureMatrix& matrix,
                                  int threads = 1);

inline constexpr std::size_t kMaxBruteForceFeatures = 15;

/// Exhaustive 2^n coalition enumeration of the same cover-weighted game.
/// Only meant as an independent check of tree_shap on small models.
ShapleyRow brute_force_shap(const gbtree::Ensemble& model, std::span<const double> instance);

/// Value of the cover-weighted game for the coalition bitmask `present`.
double coalition_value(const gbtree::Ensemble& model, std::span<const double> instance,
                       std::uint64_t present);

/// Schema-level feature names in first-appearance order of `origin`.
std::vector<std::string> source_features(std::span<const std::string> origin);

/// Per-instance phi of one source feature (one-hot members summed).
std::vector<double> source_phi(std::span<const ShapleyRow> phis,
                               std::span<const std::string> origin, const std::string& feature);

struct ImportanceRow {
  std::string feature;
  double mean_abs_phi = 0.0;
  double sd_abs_phi = 0.0;  // population SD of |phi|
};

/// Sorted by descending mean_abs_phi; ties keep source order.
struct ImportanceTable {
  std::vector<ImportanceRow> rows;

  const ImportanceRow* find(const std::string& feature) const;
  std::optional<std::size_t> rank_of(const std::string& feature) const;
};

ImportanceTable importance_table(std::span<const ShapleyRow> phis,
                                 std::span<const std::string> origin);

using FeatureValue = std::variant<double, std::string>;

struct DependenceRow {
  FeatureValue feature_value;
  double phi = 0.0;
  std::size_t row_id = 0;
};

struct DependenceTable {
  std::string feature;
  std::vector<DependenceRow> rows;
};

/// Pairs each instance's value of `feature` (the indicated category label for
/// one-hot encoded features) with its summed phi.
DependenceTable dependence_table(std::span<const ShapleyRow> phis, const std::string& feature,
                                 const FeatureMatrix& matrix);

struct ClassSummary {
  std::string label;
  std::size_t n = 0;
  std::optional<double> mean_phi;  // nullopt for empty classes
};

/// Mean signed phi of `feature` within each class of a partition of the
/// instances. `class_of[i]` names the class of instance i; `classes` fixes
/// the reported order and may include classes with no members.
std::vector<ClassSummary> category_summary(std::span<const ShapleyRow> phis,
                                           std::span<const std::string> origin,
                                           const std::string& feature,
                                           std::span<const std::string> class_of,
                                           std::span<const std::string> classes);

std::string importance_csv(const ImportanceTable& table);
std::string dependence_csv(const DependenceTable& table);
/// Header: source feature names then base_value; one row per instance.
std::string shap_matrix_csv(std::span<const ShapleyRow> phis, std::span<const std::string> origin);

}  // namespace hte::shapley
