#include "hte/shapley.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include "hte/csv.hpp"
#include "hte/error.hpp"
#include "hte/parallel.hpp"
#include "hte/stats.hpp"

namespace hte::shapley {
namespace {

using gbtree::Ensemble;
using gbtree::Node;
using gbtree::Tree;

void check_instance(const Ensemble& model, std::span<const double> instance) {
  if (instance.size() != model.feature_names.size()) {
    fail(ErrorCode::kFeatureMismatch, "instance has " + std::to_string(instance.size()) +
                                          " columns, model expects " +
                                          std::to_string(model.feature_names.size()));
  }
}

void check_covers(const Ensemble& model) {
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    for (const Node& node : model.trees[t].nodes) {
      const bool bad = !std::isfinite(node.cover) || node.cover < 0.0 ||
                       (!node.is_leaf() && node.cover <= 0.0);
      if (bad) {
        fail(ErrorCode::kMissingCovers, "tree " + std::to_string(t) + " lacks node covers");
      }
    }
  }
}

double expected_value(const Tree& tree, std::size_t index) {
  const Node& node = tree.nodes[index];
  if (node.is_leaf()) return node.value;
  const auto l = static_cast<std::size_t>(node.left);
  const auto r = static_cast<std::size_t>(node.right);
  return (tree.nodes[l].cover * expected_value(tree, l) +
          tree.nodes[r].cover * expected_value(tree, r)) /
         node.cover;
}

// One element of the unique feature path carried down the tree: the
// fraction of zero (feature absent) and one (feature present) paths that
// flow through, and the running permutation weight.
struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction,
                 int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / static_cast<double>(depth + 1);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next_one * (depth + 1) / ((i + 1) * one_fraction);
      next_one = tmp - path[i].weight * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero_fraction * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

// Total permutation weight of the path with element `index` removed.
double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  double next_one = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one_fraction != 0.0) {
      const double tmp = next_one * (depth + 1) / ((i + 1) * one_fraction);
      total += tmp;
      next_one = path[i].weight - tmp * zero_fraction * (depth - i) / static_cast<double>(depth + 1);
    } else if (zero_fraction != 0.0) {
      total += path[i].weight / zero_fraction / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

void shap_recurse(const Tree& tree, std::span<const double> x, std::span<double> phi,
                  std::size_t index, int depth, PathElement* parent_path,
                  double parent_zero, double parent_one, int parent_feature) {
  PathElement* path = parent_path + depth + 1;
  std::copy(parent_path, parent_path + depth + 1, path);
  extend_path(path, depth, parent_zero, parent_one, parent_feature);

  const Node& node = tree.nodes[index];
  if (node.is_leaf()) {
    for (int i = 1; i <= depth; ++i) {
      const double w = unwound_path_sum(path, depth, i);
      const PathElement& el = path[i];
      phi[static_cast<std::size_t>(el.feature)] +=
          w * (el.one_fraction - el.zero_fraction) * node.value;
    }
    return;
  }

  const auto feature = static_cast<std::size_t>(node.feature);
  const bool go_left = x[feature] < node.threshold;
  const auto hot = static_cast<std::size_t>(go_left ? node.left : node.right);
  const auto cold = static_cast<std::size_t>(go_left ? node.right : node.left);
  const double hot_zero = tree.nodes[hot].cover / node.cover;
  const double cold_zero = tree.nodes[cold].cover / node.cover;
  double incoming_zero = 1.0;
  double incoming_one = 1.0;

  // A feature already on the path is removed and re-added so it is counted once.
  int k = 0;
  for (; k <= depth; ++k) {
    if (path[k].feature == node.feature) break;
  }
  if (k != depth + 1) {
    incoming_zero = path[k].zero_fraction;
    incoming_one = path[k].one_fraction;
    unwind_path(path, depth, k);
    depth -= 1;
  }

  shap_recurse(tree, x, phi, hot, depth + 1, path, hot_zero * incoming_zero, incoming_one,
               node.feature);
  shap_recurse(tree, x, phi, cold, depth + 1, path, cold_zero * incoming_zero, 0.0,
               node.feature);
}

double conditional_value(const Tree& tree, std::size_t index, std::span<const double> x,
                         std::uint64_t present) {
  const Node& node = tree.nodes[index];
  if (node.is_leaf()) return node.value;
  const auto l = static_cast<std::size_t>(node.left);
  const auto r = static_cast<std::size_t>(node.right);
  if ((present >> node.feature) & 1U) {
    return conditional_value(tree, x[static_cast<std::size_t>(node.feature)] < node.threshold ? l : r,
                             x, present);
  }
  return (tree.nodes[l].cover * conditional_value(tree, l, x, present) +
          tree.nodes[r].cover * conditional_value(tree, r, x, present)) /
         node.cover;
}

std::vector<std::size_t> members_of(std::span<const std::string> origin, const std::string& feature) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < origin.size(); ++j) {
    if (origin[j] == feature) out.push_back(j);
  }
  if (out.empty()) fail(ErrorCode::kUnknownFeature, "no matrix column belongs to '" + feature + "'");
  return out;
}

}  // namespace

ShapleyRow tree_shap(const Ensemble& model, std::span<const double> instance) {
  check_instance(model, instance);
  check_covers(model);
  ShapleyRow out;
  out.phi.assign(instance.size(), 0.0);
  out.base_value = model.base_score;
  std::vector<PathElement> buffer;
  for (const Tree& tree : model.trees) {
    out.base_value += expected_value(tree, 0);
    if (tree.nodes[0].is_leaf()) continue;
    const auto d = static_cast<std::size_t>(tree.depth());
    buffer.assign((d + 3) * (d + 4) / 2, PathElement{});
    shap_recurse(tree, instance, out.phi, 0, 0, buffer.data(), 1.0, 1.0, -1);
  }
  return out;
}

std::vector<ShapleyRow> tree_shap(const Ensemble& model, const FeatureMatrix& matrix, int threads) {
  if (matrix.names() != model.feature_names) {
    fail(ErrorCode::kFeatureMismatch, "matrix columns do not match the model's features");
  }
  check_covers(model);
  std::vector<ShapleyRow> out(matrix.rows());
  parallel_for(matrix.rows(), threads, [&](std::size_t r) { out[r] = tree_shap(model, matrix.row(r)); });
  return out;
}

double coalition_value(const Ensemble& model, std::span<const double> instance,
                       std::uint64_t present) {
  double value = model.base_score;
  for (const Tree& tree : model.trees) value += conditional_value(tree, 0, instance, present);
  return value;
}

ShapleyRow brute_force_shap(const Ensemble& model, std::span<const double> instance) {
  check_instance(model, instance);
  const std::size_t n = instance.size();
  if (n > kMaxBruteForceFeatures) {
    fail(ErrorCode::kTooManyFeatures, std::to_string(n) + " features exceed the enumeration limit");
  }
  check_covers(model);

  const std::uint64_t subsets = std::uint64_t{1} << n;
  std::vector<double> value(subsets);
  for (std::uint64_t s = 0; s < subsets; ++s) value[s] = coalition_value(model, instance, s);

  // weight[k] = k! (n - k - 1)! / n!
  std::vector<double> factorial(n + 1, 1.0);
  for (std::size_t i = 1; i <= n; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);
  std::vector<double> weight(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) weight[k] = factorial[k] * factorial[n - k - 1] / factorial[n];

  ShapleyRow out;
  out.phi.assign(n, 0.0);
  out.base_value = value[0];
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    double phi = 0.0;
    for (std::uint64_t s = 0; s < subsets; ++s) {
      if (s & bit) continue;
      phi += weight[static_cast<std::size_t>(std::popcount(s))] * (value[s | bit] - value[s]);
    }
    out.phi[i] = phi;
  }
  return out;
}

std::vector<std::string> source_features(std::span<const std::string> origin) {
  std::vector<std::string> out;
  for (const auto& name : origin) {
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

std::vector<double> source_phi(std::span<const ShapleyRow> phis,
                               std::span<const std::string> origin, const std::string& feature) {
  const auto members = members_of(origin, feature);
  std::vector<double> out(phis.size(), 0.0);
  for (std::size_t i = 0; i < phis.size(); ++i) {
    if (phis[i].phi.size() != origin.size()) {
      fail(ErrorCode::kFeatureMismatch, "attribution width differs from the origin map");
    }
    for (const std::size_t j : members) out[i] += phis[i].phi[j];
  }
  return out;
}

const ImportanceRow* ImportanceTable::find(const std::string& feature) const {
  for (const auto& row : rows) {
    if (row.feature == feature) return &row;
  }
  return nullptr;
}

std::optional<std::size_t> ImportanceTable::rank_of(const std::string& feature) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].feature == feature) return i;
  }
  return std::nullopt;
}

ImportanceTable importance_table(std::span<const ShapleyRow> phis,
                                 std::span<const std::string> origin) {
  if (phis.empty()) fail(ErrorCode::kEmpty, "importance table needs at least one instance");
  ImportanceTable table;
  for (const auto& feature : source_features(origin)) {
    std::vector<double> abs_phi = source_phi(phis, origin, feature);
    for (double& v : abs_phi) v = std::fabs(v);
    table.rows.push_back({feature, stats::mean(abs_phi), stats::population_sd(abs_phi)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ImportanceRow& a, const ImportanceRow& b) {
                     return a.mean_abs_phi > b.mean_abs_phi;
                   });
  return table;
}

DependenceTable dependence_table(std::span<const ShapleyRow> phis, const std::string& feature,
                                 const FeatureMatrix& matrix) {
  if (phis.size() != matrix.rows()) {
    fail(ErrorCode::kLengthMismatch, "one attribution row per matrix row is required");
  }
  const auto members = members_of(matrix.origin(), feature);
  const auto summed = source_phi(phis, matrix.origin(), feature);
  DependenceTable table;
  table.feature = feature;
  table.rows.reserve(phis.size());
  const bool categorical = !matrix.category()[members.front()].empty();
  for (std::size_t r = 0; r < phis.size(); ++r) {
    FeatureValue value;
    if (categorical) {
      std::string label;
      for (const std::size_t j : members) {
        if (matrix(r, j) == 1.0) label = matrix.category()[j];
      }
      value = label;
    } else {
      value = matrix(r, members.front());
    }
    table.rows.push_back({std::move(value), summed[r], r});
  }
  return table;
}

std::vector<ClassSummary> category_summary(std::span<const ShapleyRow> phis,
                                           std::span<const std::string> origin,
                                           const std::string& feature,
                                           std::span<const std::string> class_of,
                                           std::span<const std::string> classes) {
  if (class_of.size() != phis.size()) {
    fail(ErrorCode::kLengthMismatch, "one class label per instance is required");
  }
  const auto summed = source_phi(phis, origin, feature);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& c : classes) acc[c] = {0.0, 0};
  for (std::size_t i = 0; i < summed.size(); ++i) {
    const auto it = acc.find(class_of[i]);
    if (it == acc.end()) {
      fail(ErrorCode::kBadInputs, "class '" + class_of[i] + "' is not part of the partition");
    }
    it->second.first += summed[i];
    ++it->second.second;
  }
  std::vector<ClassSummary> out;
  for (const auto& c : classes) {
    const auto& [sum, n] = acc[c];
    ClassSummary s{c, n, std::nullopt};
    if (n > 0) s.mean_phi = sum / static_cast<double>(n);
    out.push_back(std::move(s));
  }
  return out;
}

std::string importance_csv(const ImportanceTable& table) {
  std::string out = "feature,mean_abs_phi,sd_abs_phi\n";
  for (const auto& row : table.rows) {
    const std::vector<std::string> fields = {row.feature, stats::format_double(row.mean_abs_phi),
                                             stats::format_double(row.sd_abs_phi)};
    out += csv::format_row(fields);
  }
  return out;
}

std::string dependence_csv(const DependenceTable& table) {
  std::string out = "row_id,feature_value,phi\n";
  for (const auto& row : table.rows) {
    std::string value = std::holds_alternative<double>(row.feature_value)
                            ? stats::format_double(std::get<double>(row.feature_value))
                            : std::get<std::string>(row.feature_value);
    const std::vector<std::string> fields = {std::to_string(row.row_id), std::move(value),
                                             stats::format_double(row.phi)};
    out += csv::format_row(fields);
  }
  return out;
}

std::string shap_matrix_csv(std::span<const ShapleyRow> phis, std::span<const std::string> origin) {
  const auto features = source_features(origin);
  std::vector<std::vector<double>> columns;
  for (const auto& f : features) columns.push_back(source_phi(phis, origin, f));
  std::vector<std::string> header = features;
  header.emplace_back("base_value");
  std::string out = csv::format_row(header);
  for (std::size_t i = 0; i < phis.size(); ++i) {
    std::vector<std::string> fields;
    for (const auto& col : columns) fields.push_back(stats::format_double(col[i]));
    fields.push_back(stats::format_double(phis[i].base_value));
    out += csv::format_row(fields);
  }
  return out;
}

}  // namespace hte::shapley
