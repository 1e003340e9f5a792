#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace hte::synthrct {

/// Column-wise variable bindings: every vector has one entry per row.
using Columns = std::map<std::string, std::vector<double>, std::less<>>;

/// Small arithmetic language for generator formulas:
///   expr    := term (('+' | '-') term)*
///   term    := unary ('*' unary)*
///   unary   := '-' unary | primary
///   primary := number | name | '(' expr ')'
///            | 'threshold' '(' name ',' (number | 'median') ',' expr ',' expr ')'
/// threshold(f, cut, lo, hi) is lo where f < cut and hi elsewhere; 'median'
/// is the median of f over all rows being evaluated.
class Expression {
 public:
  struct Node;

  static Expression parse(std::string_view text);

  const std::string& text() const noexcept { return text_; }
  std::set<std::string> references() const;

  std::vector<double> evaluate(const Columns& columns, std::size_t rows) const;

 private:
  std::string text_;
  std::shared_ptr<const Node> root_;
};

double median(std::vector<double> values);

}  // namespace hte::synthrct
