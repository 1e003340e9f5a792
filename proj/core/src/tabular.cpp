#include "hte/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include "hte/csv.hpp"
#include "hte/error.hpp"

namespace hte::tabular {
namespace {

constexpr std::string_view kControlLabel = "control";
constexpr std::string_view kTreatmentLabel = "treatment";

ColumnKind parse_kind(const std::string& text) {
  if (text == "continuous") return ColumnKind::kContinuous;
  if (text == "ordinal") return ColumnKind::kOrdinal;
  if (text == "categorical") return ColumnKind::kCategorical;
  fail(ErrorCode::kBadSchema, "unknown column kind '" + text + "'");
}

ColumnRole parse_role(const std::string& text) {
  if (text == "feature") return ColumnRole::kFeature;
  if (text == "group") return ColumnRole::kGroup;
  if (text == "condition") return ColumnRole::kCondition;
  if (text == "pre_outcome") return ColumnRole::kPreOutcome;
  if (text == "post_outcome") return ColumnRole::kPostOutcome;
  if (text == "id") return ColumnRole::kId;
  fail(ErrorCode::kBadSchema, "unknown column role '" + text + "'");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_real(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

bool has_category(const ColumnSpec& spec, std::string_view label) {
  return std::find(spec.categories.begin(), spec.categories.end(), label) !=
         spec.categories.end();
}

const ColumnSpec& feature_spec(const Dataset& data, const std::string& name) {
  const auto idx = data.schema().find(name);
  if (!idx) fail(ErrorCode::kBadInputs, "unknown column '" + name + "'");
  const ColumnSpec& spec = data.schema()[*idx];
  if (spec.role != ColumnRole::kFeature) {
    fail(ErrorCode::kBadInputs, "column '" + name + "' is not a feature");
  }
  return spec;
}

}  // namespace

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::kContinuous: return "continuous";
    case ColumnKind::kOrdinal: return "ordinal";
    case ColumnKind::kCategorical: return "categorical";
  }
  return "?";
}

std::string_view to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::kFeature: return "feature";
    case ColumnRole::kGroup: return "group";
    case ColumnRole::kCondition: return "condition";
    case ColumnRole::kPreOutcome: return "pre_outcome";
    case ColumnRole::kPostOutcome: return "post_outcome";
    case ColumnRole::kId: return "id";
  }
  return "?";
}

std::string_view to_string(Condition condition) {
  return condition == Condition::kControl ? kControlLabel : kTreatmentLabel;
}

bool ColumnSpec::numeric() const {
  switch (role) {
    case ColumnRole::kFeature:
      return kind != ColumnKind::kCategorical;
    case ColumnRole::kPreOutcome:
    case ColumnRole::kPostOutcome:
      return true;
    default:
      return false;
  }
}

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::set<std::string> names;
  std::map<ColumnRole, int> role_counts;
  for (const auto& col : columns_) {
    if (col.name.empty()) fail(ErrorCode::kBadSchema, "column with empty name");
    if (!names.insert(col.name).second) {
      fail(ErrorCode::kBadSchema, "duplicate column '" + col.name + "'");
    }
    ++role_counts[col.role];
    std::set<std::string> cats(col.categories.begin(), col.categories.end());
    if (cats.size() != col.categories.size()) {
      fail(ErrorCode::kBadSchema, "column '" + col.name + "' repeats a category");
    }
    if (col.role == ColumnRole::kFeature && col.kind == ColumnKind::kCategorical &&
        col.categories.empty()) {
      fail(ErrorCode::kBadSchema, "categorical feature '" + col.name + "' lists no categories");
    }
    if ((col.role == ColumnRole::kPreOutcome || col.role == ColumnRole::kPostOutcome) &&
        col.kind == ColumnKind::kCategorical) {
      fail(ErrorCode::kBadSchema, "outcome column '" + col.name + "' must be numeric");
    }
  }
  for (const ColumnRole role : {ColumnRole::kGroup, ColumnRole::kCondition,
                                ColumnRole::kPreOutcome, ColumnRole::kPostOutcome}) {
    if (role_counts[role] != 1) {
      fail(ErrorCode::kBadSchema, "schema needs exactly one '" + std::string(to_string(role)) +
                                      "' column, found " + std::to_string(role_counts[role]));
    }
  }
}

Schema Schema::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(ErrorCode::kBadSchema, "schema must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "columns") fail(ErrorCode::kBadSchema, "unknown schema key '" + key + "'");
  }
  if (!doc.contains("columns") || !doc["columns"].is_array()) {
    fail(ErrorCode::kBadSchema, "schema needs a 'columns' array");
  }
  std::vector<ColumnSpec> columns;
  for (const auto& item : doc["columns"]) {
    if (!item.is_object()) fail(ErrorCode::kBadSchema, "column entries must be objects");
    for (const auto& [key, _] : item.items()) {
      if (key != "name" && key != "kind" && key != "role" && key != "categories") {
        fail(ErrorCode::kBadSchema, "unknown column key '" + key + "'");
      }
    }
    try {
      ColumnSpec spec;
      spec.name = item.at("name").get<std::string>();
      spec.kind = parse_kind(item.at("kind").get<std::string>());
      spec.role = parse_role(item.at("role").get<std::string>());
      if (item.contains("categories")) {
        spec.categories = item["categories"].get<std::vector<std::string>>();
      }
      if (has_category(spec, kMissingCategory)) {
        fail(ErrorCode::kBadSchema, "column '" + spec.name + "' declares the reserved category " +
                                        std::string(kMissingCategory));
      }
      columns.push_back(std::move(spec));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kBadSchema, e.what());
    }
  }
  return Schema(std::move(columns));
}

nlohmann::json Schema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& col : columns_) {
    nlohmann::json item = {{"name", col.name},
                           {"kind", to_string(col.kind)},
                           {"role", to_string(col.role)}};
    if (!col.categories.empty()) item["categories"] = col.categories;
    cols.push_back(std::move(item));
  }
  return {{"columns", std::move(cols)}};
}

std::optional<std::size_t> Schema::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t Schema::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  fail(ErrorCode::kMissingColumn, "no column named '" + std::string(name) + "'");
}

std::size_t Schema::role_index(ColumnRole role) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].role == role) return i;
  }
  fail(ErrorCode::kBadSchema, "schema has no '" + std::string(to_string(role)) + "' column");
}

std::vector<std::size_t> Schema::feature_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].role == ColumnRole::kFeature) out.push_back(i);
  }
  return out;
}

Schema load_schema(const std::filesystem::path& path) {
  const std::string text = csv::read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kBadSchema, path.string() + ": " + e.what());
  }
  return Schema::from_json(doc);
}

Dataset::Dataset(Schema schema, std::vector<ColumnData> columns)
    : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (columns_.size() != schema_.size()) {
    fail(ErrorCode::kInternal, "dataset column count does not match schema");
  }
  rows_ = columns_.empty() ? 0 : std::visit([](const auto& c) { return c.size(); }, columns_[0]);
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const bool numeric = std::holds_alternative<NumericColumn>(columns_[c]);
    if (numeric != schema_[c].numeric()) {
      fail(ErrorCode::kInternal, "column '" + schema_[c].name + "' storage does not match kind");
    }
    if (std::visit([](const auto& col) { return col.size(); }, columns_[c]) != rows_) {
      fail(ErrorCode::kInternal, "ragged dataset column '" + schema_[c].name + "'");
    }
  }
  const auto& group = labels(schema_.role_index(ColumnRole::kGroup));
  const auto& cond = labels(schema_.role_index(ColumnRole::kCondition));
  for (std::size_t r = 0; r < rows_; ++r) {
    if (!group[r] || group[r]->empty()) {
      fail(ErrorCode::kParseError, "row " + std::to_string(r + 1) + ": missing group id");
    }
    if (!cond[r] || (*cond[r] != kControlLabel && *cond[r] != kTreatmentLabel)) {
      fail(ErrorCode::kParseError,
           "row " + std::to_string(r + 1) + ": condition must be control or treatment");
    }
  }
}

const NumericColumn& Dataset::numeric(std::size_t col) const {
  if (const auto* p = std::get_if<NumericColumn>(&columns_.at(col))) return *p;
  fail(ErrorCode::kInternal, "column '" + schema_[col].name + "' is not numeric");
}

const LabelColumn& Dataset::labels(std::size_t col) const {
  if (const auto* p = std::get_if<LabelColumn>(&columns_.at(col))) return *p;
  fail(ErrorCode::kInternal, "column '" + schema_[col].name + "' does not hold labels");
}

bool Dataset::is_missing(std::size_t row, std::size_t col) const {
  return std::visit([row](const auto& c) { return !c.at(row).has_value(); }, columns_.at(col));
}

std::vector<std::string> Dataset::groups() const {
  const auto& col = labels(schema_.role_index(ColumnRole::kGroup));
  std::vector<std::string> out;
  out.reserve(rows_);
  for (const auto& cell : col) out.push_back(*cell);
  return out;
}

std::vector<Condition> Dataset::conditions() const {
  const auto& col = labels(schema_.role_index(ColumnRole::kCondition));
  std::vector<Condition> out;
  out.reserve(rows_);
  for (const auto& cell : col) {
    out.push_back(*cell == kControlLabel ? Condition::kControl : Condition::kTreatment);
  }
  return out;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
  std::vector<ColumnData> out;
  out.reserve(columns_.size());
  for (const auto& column : columns_) {
    out.push_back(std::visit(
        [&](const auto& col) -> ColumnData {
          std::decay_t<decltype(col)> picked;
          picked.reserve(rows.size());
          for (const std::size_t r : rows) picked.push_back(col.at(r));
          return picked;
        },
        column));
  }
  return Dataset(schema_, std::move(out));
}

std::vector<std::size_t> Dataset::rows_with(Condition condition) const {
  const auto conds = conditions();
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < conds.size(); ++r) {
    if (conds[r] == condition) out.push_back(r);
  }
  return out;
}

Dataset parse_csv(std::string_view text, const Schema& schema, const LoadOptions& options) {
  const csv::Table table = csv::parse(text);
  std::unordered_map<std::string, std::size_t> header_index;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (!header_index.emplace(table.header[i], i).second) {
      fail(ErrorCode::kParseError, "duplicate header '" + table.header[i] + "'");
    }
  }
  for (const auto& name : table.header) {
    if (!schema.find(name)) {
      fail(ErrorCode::kParseError, "header column '" + name + "' is not in the schema");
    }
  }

  std::vector<ColumnData> columns;
  columns.reserve(schema.size());
  for (const auto& spec : schema.columns()) {
    const auto it = header_index.find(spec.name);
    if (it == header_index.end()) {
      fail(ErrorCode::kMissingColumn, "column '" + spec.name + "' absent from header");
    }
    const std::size_t src = it->second;
    auto is_missing = [&](const std::string& cell) {
      const auto t = trim(cell);
      return t.empty() || t == options.missing_sentinel;
    };
    if (spec.numeric()) {
      NumericColumn col;
      col.reserve(table.rows.size());
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string& cell = table.rows[r][src];
        if (is_missing(cell)) {
          col.emplace_back(std::nullopt);
          continue;
        }
        const auto value = parse_real(cell);
        if (!value) {
          fail(ErrorCode::kParseError, "row " + std::to_string(r + 1) + ", column " + spec.name +
                                           ": '" + cell + "' is not a number");
        }
        col.emplace_back(*value);
      }
      columns.emplace_back(std::move(col));
    } else {
      LabelColumn col;
      col.reserve(table.rows.size());
      const bool checked = spec.role == ColumnRole::kFeature;
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string cell(trim(table.rows[r][src]));
        if (is_missing(cell)) {
          col.emplace_back(std::nullopt);
          continue;
        }
        if (checked && !has_category(spec, cell)) {
          fail(ErrorCode::kUnknownCategory, "row " + std::to_string(r + 1) + ", column " +
                                                spec.name + ": unknown category '" + cell + "'");
        }
        col.emplace_back(cell);
      }
      columns.emplace_back(std::move(col));
    }
  }
  return Dataset(schema, std::move(columns));
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 const LoadOptions& options) {
  return parse_csv(csv::read_file(path), schema, options);
}

ImputePlan fit_impute(const Dataset& data, std::span<const std::size_t> fit_rows) {
  if (fit_rows.empty()) fail(ErrorCode::kEmpty, "fit_impute needs at least one fit row");
  ImputePlan plan;
  for (const std::size_t c : data.schema().feature_indices()) {
    const ColumnSpec& spec = data.schema()[c];
    ImputeRule rule;
    rule.fit_row_count = fit_rows.size();
    if (spec.kind == ColumnKind::kCategorical) {
      rule.categorical = true;
    } else {
      const auto& col = data.numeric(c);
      double sum = 0.0;
      std::size_t n = 0;
      for (const std::size_t r : fit_rows) {
        if (const auto& v = col.at(r)) {
          sum += *v;
          ++n;
        }
      }
      if (n == 0) {
        fail(ErrorCode::kAllMissing, "column '" + spec.name + "' has no observed fit values");
      }
      rule.mean = sum / static_cast<double>(n);
    }
    plan.rules.emplace(spec.name, rule);
  }
  return plan;
}

ImputePlan fit_impute(const Dataset& data) {
  std::vector<std::size_t> all(data.row_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return fit_impute(data, all);
}

Dataset apply_impute(const Dataset& data, const ImputePlan& plan) {
  const auto features = data.schema().feature_indices();
  std::set<std::string> feature_names;
  for (const std::size_t c : features) feature_names.insert(data.schema()[c].name);
  std::set<std::string> plan_names;
  for (const auto& [name, _] : plan.rules) plan_names.insert(name);
  if (feature_names != plan_names) {
    fail(ErrorCode::kPlanMismatch, "impute plan columns differ from dataset features");
  }

  std::vector<ColumnSpec> specs = data.schema().columns();
  std::vector<ColumnData> columns;
  columns.reserve(specs.size());
  for (std::size_t c = 0; c < specs.size(); ++c) {
    ColumnSpec& spec = specs[c];
    if (spec.role != ColumnRole::kFeature) {
      columns.push_back(data.column(c));
      continue;
    }
    const ImputeRule& rule = plan.rules.at(spec.name);
    if (rule.categorical != (spec.kind == ColumnKind::kCategorical)) {
      fail(ErrorCode::kPlanMismatch, "impute rule kind differs for '" + spec.name + "'");
    }
    if (rule.categorical) {
      if (!has_category(spec, kMissingCategory)) {
        spec.categories.emplace_back(kMissingCategory);
      }
      LabelColumn col = data.labels(c);
      for (auto& cell : col) {
        if (!cell) cell = std::string(kMissingCategory);
      }
      columns.emplace_back(std::move(col));
    } else {
      NumericColumn col = data.numeric(c);
      for (auto& cell : col) {
        if (!cell) cell = rule.mean;
      }
      columns.emplace_back(std::move(col));
    }
  }
  return Dataset(Schema(std::move(specs)), std::move(columns));
}

Dataset derive_feature(const Dataset& data, DeriveMode mode, std::span<const std::string> inputs,
                       const std::string& output) {
  if (mode == DeriveMode::kMeanOf && inputs.size() < 2) {
    fail(ErrorCode::kBadInputs, "mean_of needs at least two inputs");
  }
  if (mode == DeriveMode::kDifferenceOf && inputs.size() != 2) {
    fail(ErrorCode::kBadInputs, "difference_of needs exactly two inputs");
  }
  std::set<std::string> input_set(inputs.begin(), inputs.end());
  if (input_set.size() != inputs.size()) fail(ErrorCode::kBadInputs, "repeated input column");
  std::vector<const NumericColumn*> sources;
  for (const auto& name : inputs) {
    const ColumnSpec& spec = feature_spec(data, name);
    if (spec.kind == ColumnKind::kCategorical) {
      fail(ErrorCode::kBadInputs, "input '" + name + "' is categorical");
    }
    sources.push_back(&data.numeric(data.schema().index_of(name)));
  }
  if (data.schema().find(output) && !input_set.contains(output)) {
    fail(ErrorCode::kBadInputs, "output column '" + output + "' already exists");
  }

  NumericColumn derived(data.row_count());
  for (std::size_t r = 0; r < data.row_count(); ++r) {
    if (mode == DeriveMode::kMeanOf) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto* src : sources) {
        if (const auto& v = (*src)[r]) {
          sum += *v;
          ++n;
        }
      }
      if (n > 0) derived[r] = sum / static_cast<double>(n);
    } else {
      const auto& a = (*sources[0])[r];
      const auto& b = (*sources[1])[r];
      if (a && b) derived[r] = *a - *b;
    }
  }

  std::vector<ColumnSpec> specs;
  std::vector<ColumnData> columns;
  for (std::size_t c = 0; c < data.schema().size(); ++c) {
    if (input_set.contains(data.schema()[c].name)) continue;
    specs.push_back(data.schema()[c]);
    columns.push_back(data.column(c));
  }
  specs.push_back({output, ColumnKind::kContinuous, ColumnRole::kFeature, {}});
  columns.emplace_back(std::move(derived));
  return Dataset(Schema(std::move(specs)), std::move(columns));
}

std::vector<double> outcome_change(const Dataset& data) {
  const auto& pre = data.numeric(data.schema().role_index(ColumnRole::kPreOutcome));
  const auto& post = data.numeric(data.schema().role_index(ColumnRole::kPostOutcome));
  std::vector<double> change(data.row_count());
  for (std::size_t r = 0; r < change.size(); ++r) {
    if (!pre[r] || !post[r]) {
      fail(ErrorCode::kMissingOutcome, "row " + std::to_string(r) + " has a missing outcome");
    }
    change[r] = *post[r] - *pre[r];
  }
  return change;
}

FeatureMatrix encode_matrix(const Dataset& data, const EncodeOptions& options) {
  struct Source {
    std::size_t column;
    std::string category;
  };
  std::vector<Source> sources;
  std::vector<std::string> names, origin, category;
  for (std::size_t c = 0; c < data.schema().size(); ++c) {
    const ColumnSpec& spec = data.schema()[c];
    const bool pre = options.include_pre_outcome && spec.role == ColumnRole::kPreOutcome;
    if (spec.role != ColumnRole::kFeature && !pre) continue;
    if (spec.numeric()) {
      sources.push_back({c, {}});
      names.push_back(spec.name);
      origin.push_back(spec.name);
      category.emplace_back();
    } else {
      for (const auto& cat : spec.categories) {
        sources.push_back({c, cat});
        names.push_back(spec.name + "=" + cat);
        origin.push_back(spec.name);
        category.push_back(cat);
      }
    }
  }

  const std::size_t rows = data.row_count();
  const std::size_t cols = sources.size();
  std::vector<double> values(rows * cols);
  for (std::size_t j = 0; j < cols; ++j) {
    const Source& src = sources[j];
    const ColumnSpec& spec = data.schema()[src.column];
    if (spec.numeric()) {
      const auto& col = data.numeric(src.column);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!col[r]) {
          fail(ErrorCode::kNotImputed,
               "row " + std::to_string(r) + ", column " + spec.name + " is missing");
        }
        values[r * cols + j] = *col[r];
      }
    } else {
      const auto& col = data.labels(src.column);
      for (std::size_t r = 0; r < rows; ++r) {
        if (!col[r]) {
          fail(ErrorCode::kNotImputed,
               "row " + std::to_string(r) + ", column " + spec.name + " is missing");
        }
        values[r * cols + j] = *col[r] == src.category ? 1.0 : 0.0;
      }
    }
  }
  return FeatureMatrix(rows, std::move(names), std::move(origin), std::move(category),
                       std::move(values));
}

}  // namespace hte::tabular
