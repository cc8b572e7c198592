#pragma once

// Arithmetic expressions over named variables, for strength and length
// formulas in web description files.
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('-' | '+') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | name | name '(' expr ')' | '(' expr ')'
//
// Functions: sqrt, abs. Evaluation is eager: parse and evaluate in one pass.

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <string>
#include <string_view>

#include "qgflow/errors.hpp"

namespace qgflow {

using VariableMap = std::map<std::string, double, std::less<>>;

namespace detail {

class ExprParser {
 public:
  ExprParser(std::string_view src, const VariableMap& vars) : src_(src), vars_(vars) {}

  double run() {
    const double v = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression \"" + std::string(src_) + "\": " + msg);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) {
        v += term();
      } else if (eat('-')) {
        v -= term();
      } else {
        return v;
      }
    }
  }

  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) {
        v *= unary();
      } else if (eat('/')) {
        v /= unary();
      } else {
        return v;
      }
    }
  }

  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }

  double power() {
    const double base = atom();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }

  double atom() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end");
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(src_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("bad number");
      pos_ += static_cast<size_t>(end - rest.c_str());
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      const std::string_view name = src_.substr(start, pos_ - start);
      if (eat('(')) {
        const double arg = expr();
        if (!eat(')')) fail("missing ')'");
        if (name == "sqrt") return std::sqrt(arg);
        if (name == "abs") return std::abs(arg);
        fail("unknown function '" + std::string(name) + "'");
      }
      const auto it = vars_.find(name);
      if (it == vars_.end()) fail("unknown variable '" + std::string(name) + "'");
      return it->second;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view src_;
  const VariableMap& vars_;
  size_t pos_ = 0;
};

}  // namespace detail

inline double evaluate_expression(std::string_view src, const VariableMap& vars) {
  return detail::ExprParser(src, vars).run();
}

}  // namespace qgflow
