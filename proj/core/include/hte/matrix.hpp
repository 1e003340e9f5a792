#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hte {

/// Dense, row-major, missing-free numeric design matrix. Each column carries
/// its display name, the schema column it was encoded from, and (for
/// one-hot indicators) the category it indicates.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::vector<std::string> names, std::vector<double> values);
  FeatureMatrix(std::size_t rows, std::vector<std::string> names, std::vector<std::string> origin,
                std::vector<std::string> category, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return names_.size(); }

  double operator()(std::size_t row, std::size_t col) const noexcept {
    return values_[row * cols() + col];
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols(), cols()};
  }
  std::span<const double> values() const noexcept { return values_; }

  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::string>& origin() const noexcept { return origin_; }
  const std::vector<std::string>& category() const noexcept { return category_; }

  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;

 private:
  std::size_t rows_ = 0;
  std::vector<std::string> names_;
  std::vector<std::string> origin_;
  std::vector<std::string> category_;
  std::vector<double> values_;
};

}  // namespace hte
