#include "hte/matrix.hpp"

#include "hte/error.hpp"

namespace hte {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::vector<std::string> names,
                             std::vector<double> values)
    : FeatureMatrix(rows, names, names, std::vector<std::string>(names.size()),
                    std::move(values)) {}

FeatureMatrix::FeatureMatrix(std::size_t rows, std::vector<std::string> names,
                             std::vector<std::string> origin, std::vector<std::string> category,
                             std::vector<double> values)
    : rows_(rows),
      names_(std::move(names)),
      origin_(std::move(origin)),
      category_(std::move(category)),
      values_(std::move(values)) {
  if (origin_.size() != names_.size() || category_.size() != names_.size()) {
    fail(ErrorCode::kLengthMismatch, "feature matrix metadata does not match column count");
  }
  if (values_.size() != rows_ * names_.size()) {
    fail(ErrorCode::kLengthMismatch, "feature matrix values do not match rows x cols");
  }
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  std::vector<double> values;
  values.reserve(rows.size() * cols());
  for (const std::size_t r : rows) {
    if (r >= rows_) fail(ErrorCode::kInternal, "row index out of range");
    const auto src = row(r);
    values.insert(values.end(), src.begin(), src.end());
  }
  return FeatureMatrix(rows.size(), names_, origin_, category_, std::move(values));
}

}  // namespace hte
