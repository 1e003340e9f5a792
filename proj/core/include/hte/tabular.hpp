#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "hte/matrix.hpp"

namespace hte::tabular {

/// Reserved category that absorbs missing categorical cells.
inline constexpr std::string_view kMissingCategory = "__missing__";

enum class ColumnKind { kContinuous, kOrdinal, kCategorical };
enum class ColumnRole { kFeature, kGroup, kCondition, kPreOutcome, kPostOutcome, kId };
enum class Condition { kControl, kTreatment };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(ColumnRole role);
std::string_view to_string(Condition condition);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kContinuous;
  ColumnRole role = ColumnRole::kFeature;
  std::vector<std::string> categories;

  /// True when cells hold reals (continuous/ordinal features and outcomes).
  bool numeric() const;
};

class Schema {
 public:
  Schema() = default;
  explicit Schema(std::vector<ColumnSpec> columns);

  /// Parses {"columns": [{name, kind, role, categories?}, ...]}. Unknown keys
  /// and user-declared uses of the reserved missing category are rejected.
  static Schema from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  std::size_t size() const noexcept { return columns_.size(); }
  const ColumnSpec& operator[](std::size_t i) const { return columns_[i]; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  std::size_t role_index(ColumnRole role) const;
  std::vector<std::size_t> feature_indices() const;

 private:
  std::vector<ColumnSpec> columns_;
};

Schema load_schema(const std::filesystem::path& path);

using NumericColumn = std::vector<std::optional<double>>;
using LabelColumn = std::vector<std::optional<std::string>>;
using ColumnData = std::variant<NumericColumn, LabelColumn>;

/// Immutable typed table. Storage is column-major; numeric columns hold
/// reals, every other column holds labels, and std::nullopt is the missing
/// marker in both.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Schema schema, std::vector<ColumnData> columns);

  const Schema& schema() const noexcept { return schema_; }
  std::size_t row_count() const noexcept { return rows_; }

  const ColumnData& column(std::size_t col) const { return columns_.at(col); }
  const NumericColumn& numeric(std::size_t col) const;
  const LabelColumn& labels(std::size_t col) const;
  bool is_missing(std::size_t row, std::size_t col) const;

  std::vector<std::string> groups() const;
  std::vector<Condition> conditions() const;

  Dataset select_rows(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> rows_with(Condition condition) const;

 private:
  Schema schema_;
  std::vector<ColumnData> columns_;
  std::size_t rows_ = 0;
};

struct LoadOptions {
  std::string missing_sentinel = "NA";
};

Dataset parse_csv(std::string_view text, const Schema& schema, const LoadOptions& options = {});
Dataset load_csv(const std::filesystem::path& path, const Schema& schema,
                 const LoadOptions& options = {});

struct ImputeRule {
  bool categorical = false;
  double mean = 0.0;
  std::size_t fit_row_count = 0;
};

struct ImputePlan {
  std::map<std::string, ImputeRule> rules;
};

ImputePlan fit_impute(const Dataset& data, std::span<const std::size_t> fit_rows);
ImputePlan fit_impute(const Dataset& data);
Dataset apply_impute(const Dataset& data, const ImputePlan& plan);

enum class DeriveMode { kMeanOf, kDifferenceOf };

Dataset derive_feature(const Dataset& data, DeriveMode mode, std::span<const std::string> inputs,
                       const std::string& output);

/// post_outcome - pre_outcome per row.
std::vector<double> outcome_change(const Dataset& data);

struct EncodeOptions {
  /// Also emit the pre-outcome column as a continuous predictor.
  bool include_pre_outcome = false;
};

FeatureMatrix encode_matrix(const Dataset& data, const EncodeOptions& options = {});

}  // namespace hte::tabular
