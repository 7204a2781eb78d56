#pragma once

// Integer arithmetic expressions for parametric item templates.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | primary
//   primary := integer | identifier | '(' expr ')'
//
// Evaluation is exact over the rationals.

#include "drillforge/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>

namespace drillforge {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// "5", "-1", "1/2", "-7/3": lowest terms, sign on the numerator.
inline std::string format_rational(const Rational& value) {
  const BigInt num = boost::multiprecision::numerator(value);
  const BigInt den = boost::multiprecision::denominator(value);
  if (den == 1) return num.str();
  return num.str() + "/" + den.str();
}

class ExpressionTree {
 public:
  enum class Kind { number, variable, negate, add, subtract, multiply, divide };

  struct Node {
    Kind kind;
    std::size_t offset;  // position of the token that produced this node
    BigInt number;
    std::string name;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
  };

  ExpressionTree() = default;
  explicit ExpressionTree(std::shared_ptr<const Node> root, std::string source)
      : root_(std::move(root)), source_(std::move(source)) {}

  const Node* root() const { return root_.get(); }
  const std::string& source() const { return source_; }

  std::set<std::string> variables() const {
    std::set<std::string> out;
    collect(root_.get(), out);
    return out;
  }

 private:
  static void collect(const Node* node, std::set<std::string>& out) {
    if (node == nullptr) return;
    if (node->kind == Kind::variable) out.insert(node->name);
    collect(node->lhs.get(), out);
    collect(node->rhs.get(), out);
  }

  std::shared_ptr<const Node> root_;
  std::string source_;
};

namespace detail {

class ExpressionParser {
 public:
  using Node = ExpressionTree::Node;
  using NodePtr = std::shared_ptr<const Node>;
  using Kind = ExpressionTree::Kind;

  explicit ExpressionParser(std::string_view text) : text_(text) {}

  NodePtr parse() {
    NodePtr root = expr();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character '" + std::string(1, text_[pos_]) + "'");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::syntax, what + " at offset " + std::to_string(pos_), pos_);
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

  static NodePtr binary(Kind kind, std::size_t offset, NodePtr lhs, NodePtr rhs) {
    return std::make_shared<const Node>(Node{kind, offset, {}, {}, std::move(lhs), std::move(rhs)});
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      skip_space();
      const std::size_t at = pos_;
      if (accept('+')) {
        lhs = binary(Kind::add, at, lhs, term());
      } else if (accept('-')) {
        lhs = binary(Kind::subtract, at, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      skip_space();
      const std::size_t at = pos_;
      if (accept('*')) {
        lhs = binary(Kind::multiply, at, lhs, unary());
      } else if (accept('/')) {
        lhs = binary(Kind::divide, at, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    skip_space();
    const std::size_t at = pos_;
    if (accept('-')) {
      return std::make_shared<const Node>(Node{Kind::negate, at, {}, {}, unary(), nullptr});
    }
    return primary();
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("expected a number, variable or '('");
    const std::size_t at = pos_;
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr inner = expr();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      BigInt value(std::string(text_.substr(at, pos_ - at)));
      return std::make_shared<const Node>(Node{Kind::number, at, std::move(value), {}, nullptr, nullptr});
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      return std::make_shared<const Node>(
          Node{Kind::variable, at, {}, std::string(text_.substr(at, pos_ - at)), nullptr, nullptr});
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline Rational evaluate_node(const ExpressionTree::Node& node, const std::map<std::string, Rational>& bindings) {
  using Kind = ExpressionTree::Kind;
  switch (node.kind) {
    case Kind::number:
      return Rational(node.number);
    case Kind::variable: {
      auto it = bindings.find(node.name);
      if (it == bindings.end()) {
        throw Error(ErrorCode::unbound_variable, "unbound variable '" + node.name + "'", node.offset);
      }
      return it->second;
    }
    case Kind::negate:
      return -evaluate_node(*node.lhs, bindings);
    default:
      break;
  }
  const Rational lhs = evaluate_node(*node.lhs, bindings);
  const Rational rhs = evaluate_node(*node.rhs, bindings);
  switch (node.kind) {
    case Kind::add: return lhs + rhs;
    case Kind::subtract: return lhs - rhs;
    case Kind::multiply: return lhs * rhs;
    case Kind::divide:
      if (rhs == 0) {
        throw Error(ErrorCode::division_by_zero, "division by zero at offset " + std::to_string(node.offset),
                    node.offset);
      }
      return lhs / rhs;
    default:
      throw Error(ErrorCode::invalid_argument, "malformed expression tree");
  }
}

}  // namespace detail

inline ExpressionTree parse_expression(std::string_view text) {
  detail::ExpressionParser parser(text);
  return ExpressionTree(parser.parse(), std::string(text));
}

inline Rational evaluate(const ExpressionTree& tree, const std::map<std::string, Rational>& bindings) {
  if (tree.root() == nullptr) throw Error(ErrorCode::invalid_argument, "empty expression");
  return detail::evaluate_node(*tree.root(), bindings);
}

}  // namespace drillforge
