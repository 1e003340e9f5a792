#include "hte/gbtree.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>

#include "hte/error.hpp"
#include "hte/random.hpp"

namespace hte::gbtree {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::kBadConfig, "hyperparameter out of range: " + what);
}

// Threshold strictly between lo and hi so that lo routes left and hi right.
double midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid > lo ? mid : hi;
}

std::size_t sample_count(double fraction, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

nlohmann::json node_to_json(const Tree& tree, int index) {
  const Node& node = tree.nodes[static_cast<std::size_t>(index)];
  nlohmann::json cover = std::isnan(node.cover) ? nlohmann::json(nullptr) : nlohmann::json(node.cover);
  if (node.is_leaf()) return {{"value", node.value}, {"cover", cover}};
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"cover", cover},
          {"left", node_to_json(tree, node.left)},
          {"right", node_to_json(tree, node.right)}};
}

int node_from_json(const nlohmann::json& doc, Tree& tree, std::size_t n_features, int depth) {
  if (depth > 64) fail(ErrorCode::kBadInputs, "tree nesting too deep");
  const int index = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  Node node;
  node.cover = doc.contains("cover") && !doc["cover"].is_null() ? doc["cover"].get<double>()
                                                                 : std::nan("");
  if (doc.contains("value")) {
    node.value = doc.at("value").get<double>();
  } else {
    node.feature = doc.at("feature").get<int>();
    if (node.feature < 0 || static_cast<std::size_t>(node.feature) >= n_features) {
      fail(ErrorCode::kFeatureMismatch, "tree references feature " + std::to_string(node.feature));
    }
    node.threshold = doc.at("threshold").get<double>();
    node.left = node_from_json(doc.at("left"), tree, n_features, depth + 1);
    node.right = node_from_json(doc.at("right"), tree, n_features, depth + 1);
  }
  tree.nodes[static_cast<std::size_t>(index)] = node;
  return index;
}

}  // namespace

void Hyperparams::validate() const {
  require(max_depth >= 1, "max_depth must be >= 1");
  require(subsample > 0.0 && subsample <= 1.0, "subsample must be in (0, 1]");
  require(min_leaf >= 1, "min_leaf must be >= 1");
  require(colsample > 0.0 && colsample <= 1.0, "colsample must be in (0, 1]");
  require(eta > 0.0 && eta <= 1.0, "eta must be in (0, 1]");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(lambda >= 0.0, "lambda must be >= 0");
  require(n_trees >= 0 && n_trees <= kMaxTrees, "n_trees must be in [0, 500]");
}

nlohmann::json to_json(const Hyperparams& hp) {
  return {{"max_depth", hp.max_depth}, {"subsample", hp.subsample}, {"min_leaf", hp.min_leaf},
          {"colsample", hp.colsample}, {"eta", hp.eta},             {"gamma", hp.gamma},
          {"lambda", hp.lambda},       {"n_trees", hp.n_trees},     {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& doc) {
  Hyperparams hp;
  if (!doc.is_object()) fail(ErrorCode::kBadConfig, "hyperparameters must be a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "max_depth") hp.max_depth = value.get<int>();
      else if (key == "subsample") hp.subsample = value.get<double>();
      else if (key == "min_leaf") hp.min_leaf = value.get<int>();
      else if (key == "colsample") hp.colsample = value.get<double>();
      else if (key == "eta") hp.eta = value.get<double>();
      else if (key == "gamma") hp.gamma = value.get<double>();
      else if (key == "lambda") hp.lambda = value.get<double>();
      else if (key == "n_trees") hp.n_trees = value.get<int>();
      else if (key == "seed") hp.seed = value.get<std::uint64_t>();
      else fail(ErrorCode::kBadConfig, "unknown hyperparameter '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadConfig, e.what());
  }
  hp.validate();
  return hp;
}

double Tree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const Node& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                                                         : n.right);
  }
  return nodes[i].value;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> depth(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return deepest;
}

double Ensemble::predict_row(std::span<const double> row) const {
  double out = base_score;
  for (const Tree& tree : trees) out += tree.predict(row);
  return out;
}

double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda,
                  double gamma) {
  auto score = [lambda](double g, double h) {
    const double denom = h + lambda;
    return denom > 0.0 ? g * g / denom : 0.0;
  };
  return 0.5 * (score(g_left, h_left) + score(g_right, h_right) -
                score(g_left + g_right, h_left + h_right)) -
         gamma;
}

PresortedMatrix::PresortedMatrix(const FeatureMatrix& matrix) : matrix_(&matrix) {
  const std::size_t n = matrix.rows();
  order_.resize(matrix.cols());
  sorted_.resize(matrix.cols());
  for (std::size_t c = 0; c < matrix.cols(); ++c) {
    auto& order = order_[c];
    order.resize(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      return matrix(a, c) < matrix(b, c);
    });
    auto& sorted = sorted_[c];
    sorted.resize(n);
    for (std::size_t k = 0; k < n; ++k) sorted[k] = matrix(order[k], c);
  }
}

Tree fit_tree(const FeatureMatrix& matrix, std::span<const double> gradients,
              std::span<const double> hessians, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols, const Hyperparams& hp) {
  const PresortedMatrix sorted(matrix);
  return fit_tree(sorted, gradients, hessians, rows, cols, hp);
}

// Level-wise exact greedy growth: one pass over each column's sort order per
// depth level evaluates every candidate split of every open node at once.
// Columns are scanned in ascending index order and thresholds ascending, and
// only strictly better gains replace the incumbent, so ties resolve to the
// lowest column and then the lowest threshold.
Tree fit_tree(const PresortedMatrix& sorted, std::span<const double> gradients,
              std::span<const double> hessians, std::span<const std::size_t> rows,
              std::span<const std::size_t> cols, const Hyperparams& hp) {
  const FeatureMatrix& matrix = sorted.matrix();
  if (rows.empty()) fail(ErrorCode::kEmptyNode, "fit_tree called with zero rows");
  if (gradients.size() != matrix.rows() || hessians.size() != matrix.rows()) {
    fail(ErrorCode::kLengthMismatch, "gradient/hessian length differs from row count");
  }

  struct Totals {
    double g = 0.0;
    double h = 0.0;
    std::size_t count = 0;
    int depth = 0;
  };
  struct Best {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
  };
  struct Scan {
    double g = 0.0;
    double h = 0.0;
    std::size_t count = 0;
    double last = 0.0;
    bool seen = false;
  };

  std::vector<std::size_t> scan_cols(cols.begin(), cols.end());
  std::sort(scan_cols.begin(), scan_cols.end());
  const auto min_leaf = static_cast<std::size_t>(hp.min_leaf);
  std::vector<int> node_of(matrix.rows(), -1);
  Tree tree;
  tree.nodes.emplace_back();
  std::vector<Totals> totals(1);
  for (const std::size_t r : rows) {
    node_of[r] = 0;
    totals[0].g += gradients[r];
    totals[0].h += hessians[r];
    ++totals[0].count;
  }

  std::vector<int> frontier = {0};
  std::vector<int> slot_of;
  while (!frontier.empty()) {
    std::vector<int> open;
    for (const int node : frontier) {
      const Totals& t = totals[static_cast<std::size_t>(node)];
      if (t.depth < hp.max_depth && t.count >= 2 * min_leaf) open.push_back(node);
    }
    if (open.empty()) break;

    slot_of.assign(tree.nodes.size(), -1);
    for (std::size_t s = 0; s < open.size(); ++s) {
      slot_of[static_cast<std::size_t>(open[s])] = static_cast<int>(s);
    }
    std::vector<Best> best(open.size());
    std::vector<Scan> scan(open.size());

    for (const std::size_t c : scan_cols) {
      std::fill(scan.begin(), scan.end(), Scan{});
      const auto order = sorted.order(c);
      const auto values = sorted.sorted_values(c);
      for (std::size_t k = 0; k < order.size(); ++k) {
        const std::uint32_t r = order[k];
        const int node = node_of[r];
        if (node < 0) continue;
        const int s = slot_of[static_cast<std::size_t>(node)];
        if (s < 0) continue;
        Scan& sc = scan[static_cast<std::size_t>(s)];
        const double v = values[k];
        if (sc.seen && v > sc.last && sc.count >= min_leaf) {
          const Totals& t = totals[static_cast<std::size_t>(node)];
          if (t.count - sc.count >= min_leaf) {
            const double gain =
                split_gain(sc.g, sc.h, t.g - sc.g, t.h - sc.h, hp.lambda, hp.gamma);
            Best& b = best[static_cast<std::size_t>(s)];
            if (gain > b.gain) b = {gain, static_cast<int>(c), midpoint(sc.last, v)};
          }
        }
        sc.g += gradients[r];
        sc.h += hessians[r];
        ++sc.count;
        sc.last = v;
        sc.seen = true;
      }
    }

    std::vector<int> next;
    bool any_split = false;
    for (std::size_t s = 0; s < open.size(); ++s) {
      if (best[s].feature < 0) continue;
      any_split = true;
      const int node = open[s];
      const int left = static_cast<int>(tree.nodes.size());
      const int right = left + 1;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      Node& parent = tree.nodes[static_cast<std::size_t>(node)];
      parent.feature = best[s].feature;
      parent.threshold = best[s].threshold;
      parent.left = left;
      parent.right = right;
      const int child_depth = totals[static_cast<std::size_t>(node)].depth + 1;
      totals.push_back({0.0, 0.0, 0, child_depth});
      totals.push_back({0.0, 0.0, 0, child_depth});
      next.push_back(left);
      next.push_back(right);
    }
    if (!any_split) break;

    for (const std::size_t r : rows) {
      const int node = node_of[r];
      const Node& n = tree.nodes[static_cast<std::size_t>(node)];
      if (n.is_leaf()) continue;
      const int child = matrix(r, static_cast<std::size_t>(n.feature)) < n.threshold ? n.left
                                                                                      : n.right;
      node_of[r] = child;
      Totals& t = totals[static_cast<std::size_t>(child)];
      t.g += gradients[r];
      t.h += hessians[r];
      ++t.count;
    }
    frontier = std::move(next);
  }

  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    Node& node = tree.nodes[i];
    const Totals& t = totals[i];
    node.cover = static_cast<double>(t.count);
    if (node.is_leaf()) {
      const double denom = t.h + hp.lambda;
      node.value = denom > 0.0 ? -hp.eta * t.g / denom : 0.0;
    }
  }
  return tree;
}

Ensemble train(const FeatureMatrix& matrix, std::span<const double> targets,
               const Hyperparams& hp) {
  const PresortedMatrix sorted(matrix);
  return train(sorted, targets, hp);
}

Ensemble train(const PresortedMatrix& sorted, std::span<const double> targets,
               const Hyperparams& hp) {
  hp.validate();
  const FeatureMatrix& matrix = sorted.matrix();
  const std::size_t n = matrix.rows();
  if (n == 0) fail(ErrorCode::kEmptyData, "cannot train on zero rows");
  if (targets.size() != n) {
    fail(ErrorCode::kLengthMismatch, "target count differs from matrix rows");
  }

  Ensemble model;
  model.feature_names = matrix.names();
  model.hyperparams = hp;
  model.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(n);
  model.trees.reserve(static_cast<std::size_t>(hp.n_trees));

  std::vector<double> preds(n, model.base_score);
  std::vector<double> grad(n);
  const std::vector<double> hess(n, 1.0);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);
  std::vector<std::size_t> all_cols(matrix.cols());
  std::iota(all_cols.begin(), all_cols.end(), 0);
  const std::size_t n_rows = sample_count(hp.subsample, n);
  const std::size_t n_cols = all_cols.empty() ? 0 : sample_count(hp.colsample, all_cols.size());

  std::vector<std::size_t> rows, cols;
  for (int t = 0; t < hp.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = preds[i] - targets[i];
    Rng rng = make_rng(hp.seed, "tree", static_cast<std::uint64_t>(t));
    rows.clear();
    cols.clear();
    if (n_rows == n) {
      rows = all_rows;
    } else {
      std::sample(all_rows.begin(), all_rows.end(), std::back_inserter(rows), n_rows, rng);
    }
    if (n_cols == all_cols.size()) {
      cols = all_cols;
    } else {
      std::sample(all_cols.begin(), all_cols.end(), std::back_inserter(cols), n_cols, rng);
    }
    Tree tree = fit_tree(sorted, grad, hess, rows, cols, hp);
    for (std::size_t i = 0; i < n; ++i) preds[i] += tree.predict(matrix.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> predict(const Ensemble& model, const FeatureMatrix& matrix) {
  if (matrix.names() != model.feature_names) {
    fail(ErrorCode::kFeatureMismatch, "matrix columns do not match the model's features");
  }
  std::vector<double> out(matrix.rows());
  for (std::size_t r = 0; r < matrix.rows(); ++r) out[r] = model.predict_row(matrix.row(r));
  return out;
}

Ensemble truncate(const Ensemble& model, std::size_t count) {
  Ensemble out = model;
  if (count < out.trees.size()) out.trees.resize(count);
  out.hyperparams.n_trees = static_cast<int>(out.trees.size());
  return out;
}

nlohmann::json to_json(const Ensemble& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& tree : model.trees) trees.push_back(node_to_json(tree, 0));
  return {{"base_score", model.base_score},
          {"feature_names", model.feature_names},
          {"hyperparams", to_json(model.hyperparams)},
          {"trees", std::move(trees)}};
}

Ensemble ensemble_from_json(const nlohmann::json& doc) {
  Ensemble model;
  try {
    model.base_score = doc.at("base_score").get<double>();
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    model.hyperparams = hyperparams_from_json(doc.at("hyperparams"));
    for (const auto& item : doc.at("trees")) {
      Tree tree;
      node_from_json(item, tree, model.feature_names.size(), 0);
      model.trees.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadInputs, std::string("malformed ensemble: ") + e.what());
  }
  return model;
}

std::uint64_t fingerprint(const Ensemble& model) { return fnv1a64(to_json(model).dump()); }

}  // namespace hte::gbtree
