#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hte/matrix.hpp"

namespace hte::gbtree {

/// The six tuned regularization knobs plus the fixed leaf regularizer,
/// tree count and seed.
struct Hyperparams {
  int max_depth = 6;
  double subsample = 1.0;  // row fraction per tree, (0, 1]
  int min_leaf = 1;        // minimum instances per leaf
  double colsample = 1.0;  // column fraction per tree, (0, 1]
  double eta = 0.3;        // learning rate, (0, 1]
  double gamma = 0.0;      // minimum split gain
  double lambda = 1.0;     // leaf L2 regularizer
  int n_trees = 100;       // [0, 500]
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& doc);

inline constexpr int kMaxTrees = 500;

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, already scaled by eta
  double cover = 0.0;  // training instances that reached the node

  bool is_leaf() const noexcept { return feature < 0; }
};

/// Flat node array; nodes[0] is the root.
struct Tree {
  std::vector<Node> nodes;

  double predict(std::span<const double> row) const;
  int depth() const;
};

struct Ensemble {
  double base_score = 0.0;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
  Hyperparams hyperparams;

  double predict_row(std::span<const double> row) const;
};

/// Squared-error split gain with L2 leaf regularization and split penalty.
double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda,
                  double gamma);

/// Column-wise sort order of a matrix, shared by every tree fitted on it.
/// Holds a reference: the matrix must outlive this object.
class PresortedMatrix {
 public:
  explicit PresortedMatrix(const FeatureMatrix& matrix);

  const FeatureMatrix& matrix() const noexcept { return *matrix_; }
  std::span<const std::uint32_t> order(std::size_t col) const { return order_[col]; }
  std::span<const double> sorted_values(std::size_t col) const { return sorted_[col]; }

 private:
  const FeatureMatrix* matrix_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::vector<double>> sorted_;
};

/// Greedy exact split search over the given rows and columns.
Tree fit_tree(const FeatureMatrix& matrix, std::span<const double> gradients,
              std::span<const double> hessians, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols, const Hyperparams& hp);
Tree fit_tree(const PresortedMatrix& sorted, std::span<const double> gradients,
              std::span<const double> hessians, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols, const Hyperparams& hp);

Ensemble train(const FeatureMatrix& matrix, std::span<const double> targets,
               const Hyperparams& hp);
Ensemble train(const PresortedMatrix& sorted, std::span<const double> targets,
               const Hyperparams& hp);

std::vector<double> predict(const Ensemble& model, const FeatureMatrix& matrix);

/// Ensemble with only the first `count` trees.
Ensemble truncate(const Ensemble& model, std::size_t count);

nlohmann::json to_json(const Ensemble& model);
Ensemble ensemble_from_json(const nlohmann::json& doc);

/// Hash of the canonical JSON rendering; equal models have equal
/// fingerprints.
std::uint64_t fingerprint(const Ensemble& model);

}  // namespace hte::gbtree
