#include "hte/expression.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>

#include "hte/error.hpp"

namespace hte::synthrct {

struct Expression::Node {
  enum class Op { kConst, kRef, kAdd, kSub, kMul, kNeg, kThreshold };
  Op op = Op::kConst;
  double value = 0.0;
  std::string name;
  std::optional<double> cut;  // nullopt: median
  std::vector<std::shared_ptr<const Node>> args;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse() {
    auto node = expr();
    skip_space();
    if (pos_ != text_.size()) error("unexpected '" + std::string(1, text_[pos_]) + "'");
    return node;
  }

 private:
  [[noreturn]] void error(const std::string& msg) const {
    fail(ErrorCode::kBadConfig,
         "expression \"" + std::string(text_) + "\" at offset " + std::to_string(pos_) + ": " + msg);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) error(std::string("expected '") + c + "'");
  }

  static NodePtr binary(Node::Op op, NodePtr a, NodePtr b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->args = {std::move(a), std::move(b)};
    return n;
  }

  NodePtr expr() {
    auto lhs = term();
    while (true) {
      if (accept('+')) {
        lhs = binary(Node::Op::kAdd, lhs, term());
      } else if (accept('-')) {
        lhs = binary(Node::Op::kSub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    auto lhs = unary();
    while (accept('*')) lhs = binary(Node::Op::kMul, lhs, unary());
    return lhs;
  }

  NodePtr unary() {
    if (accept('-')) {
      auto n = std::make_shared<Node>();
      n->op = Node::Op::kNeg;
      n->args = {unary()};
      return n;
    }
    return primary();
  }

  std::optional<double> number() {
    skip_space();
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    if (pos_ >= text_.size() || !(std::isdigit(static_cast<unsigned char>(*begin)) || *begin == '.')) {
      return std::nullopt;
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) error("malformed number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }

  std::string name() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) error("expected a name");
    if (std::isdigit(static_cast<unsigned char>(text_[start]))) error("names cannot start with a digit");
    return std::string(text_.substr(start, pos_ - start));
  }

  NodePtr primary() {
    if (accept('(')) {
      auto inner = expr();
      expect(')');
      return inner;
    }
    if (const auto v = number()) {
      auto n = std::make_shared<Node>();
      n->op = Node::Op::kConst;
      n->value = *v;
      return n;
    }
    auto ident = name();
    skip_space();
    if (ident == "threshold" && pos_ < text_.size() && text_[pos_] == '(') {
      expect('(');
      auto n = std::make_shared<Node>();
      n->op = Node::Op::kThreshold;
      n->name = name();
      expect(',');
      if (const auto cut = number()) {
        n->cut = *cut;
      } else if (name() != "median") {
        error("threshold cut must be a number or median");
      }
      expect(',');
      n->args.push_back(expr());
      expect(',');
      n->args.push_back(expr());
      expect(')');
      return n;
    }
    auto n = std::make_shared<Node>();
    n->op = Node::Op::kRef;
    n->name = std::move(ident);
    return n;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void collect(const Node& n, std::set<std::string>& out) {
  if (n.op == Node::Op::kRef || n.op == Node::Op::kThreshold) out.insert(n.name);
  for (const auto& a : n.args) collect(*a, out);
}

const std::vector<double>& lookup(const Columns& columns, const std::string& name,
                                  std::size_t rows) {
  const auto it = columns.find(name);
  if (it == columns.end()) fail(ErrorCode::kBadConfig, "expression references unknown name: " + name);
  if (it->second.size() != rows) {
    fail(ErrorCode::kLengthMismatch, "column " + name + " has the wrong length");
  }
  return it->second;
}

std::vector<double> eval(const Node& n, const Columns& columns, std::size_t rows) {
  switch (n.op) {
    case Node::Op::kConst: return std::vector<double>(rows, n.value);
    case Node::Op::kRef: return lookup(columns, n.name, rows);
    case Node::Op::kNeg: {
      auto v = eval(*n.args[0], columns, rows);
      for (auto& x : v) x = -x;
      return v;
    }
    case Node::Op::kAdd:
    case Node::Op::kSub:
    case Node::Op::kMul: {
      auto a = eval(*n.args[0], columns, rows);
      const auto b = eval(*n.args[1], columns, rows);
      for (std::size_t i = 0; i < rows; ++i) {
        if (n.op == Node::Op::kAdd) a[i] += b[i];
        else if (n.op == Node::Op::kSub) a[i] -= b[i];
        else a[i] *= b[i];
      }
      return a;
    }
    case Node::Op::kThreshold: {
      const auto& f = lookup(columns, n.name, rows);
      const double cut = n.cut ? *n.cut : median(f);
      const auto lo = eval(*n.args[0], columns, rows);
      auto hi = eval(*n.args[1], columns, rows);
      for (std::size_t i = 0; i < rows; ++i) {
        if (f[i] < cut) hi[i] = lo[i];
      }
      return hi;
    }
  }
  return {};
}

}  // namespace

Expression Expression::parse(std::string_view text) {
  Expression e;
  e.text_ = std::string(text);
  e.root_ = Parser(e.text_).parse();
  return e;
}

std::set<std::string> Expression::references() const {
  std::set<std::string> out;
  if (root_) collect(*root_, out);
  return out;
}

std::vector<double> Expression::evaluate(const Columns& columns, std::size_t rows) const {
  if (!root_) return std::vector<double>(rows, 0.0);
  return eval(*root_, columns, rows);
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorCode::kEmpty, "median of empty vector");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace hte::synthrct
