#pragma once

// Arithmetic expressions over one variable `pi`, used for weighted-MSM
// weight functions. Grammar:
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | '/') factor)*
//   factor := ('-' | '+') factor | power
//   power  := atom ('^' factor)?
//   atom   := number | 'pi' | func '(' expr (',' expr)* ')' | '(' expr ')'
//   func   := min | max | sqrt | exp | log | abs

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "neuralcsa/error.hpp"

namespace ncsa::sensitivity {

class Expression {
 public:
  Expression() : Expression("pi") {}

  explicit Expression(std::string text) : text_(std::move(text)) {
    Parser p{text_, 0, nodes_};
    root_ = p.expr();
    p.skip();
    require(p.pos == text_.size(), ErrorCode::invalid_argument,
            "expression: unexpected '" + text_.substr(p.pos) + "' in '" + text_ + "'");
  }

  [[nodiscard]] const std::string& text() const { return text_; }

  [[nodiscard]] double operator()(double pi) const { return eval(root_, pi); }

 private:
  enum class Op { number, pi, add, sub, mul, div, pow, neg, min, max, sqrt, exp, log, abs };
  struct Node {
    Op op;
    double value = 0.0;
    std::vector<int> args;
  };

  struct Parser {
    const std::string& s;
    std::size_t pos;
    std::vector<Node>& nodes;

    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool accept(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    int add(Op op, std::vector<int> args, double v = 0.0) {
      nodes.push_back({op, v, std::move(args)});
      return static_cast<int>(nodes.size()) - 1;
    }
    [[noreturn]] void fail(const std::string& what) const {
      throw Error(ErrorCode::invalid_argument, "expression: " + what + " at offset " + std::to_string(pos) + " in '" + s + "'");
    }
    int expr() {
      int lhs = term();
      for (;;) {
        if (accept('+')) {
          lhs = add(Op::add, {lhs, term()});
        } else if (accept('-')) {
          lhs = add(Op::sub, {lhs, term()});
        } else {
          return lhs;
        }
      }
    }
    int term() {
      int lhs = factor();
      for (;;) {
        if (accept('*')) {
          lhs = add(Op::mul, {lhs, factor()});
        } else if (accept('/')) {
          lhs = add(Op::div, {lhs, factor()});
        } else {
          return lhs;
        }
      }
    }
    int factor() {
      if (accept('-')) return add(Op::neg, {factor()});
      if (accept('+')) return factor();
      const int base = atom();
      if (accept('^')) return add(Op::pow, {base, factor()});
      return base;
    }
    int atom() {
      skip();
      if (accept('(')) {
        const int e = expr();
        if (!accept(')')) fail("expected ')'");
        return e;
      }
      if (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) {
        double v = 0.0;
        const auto res = std::from_chars(s.data() + pos, s.data() + s.size(), v);
        if (res.ec != std::errc()) fail("bad number");
        pos = static_cast<std::size_t>(res.ptr - s.data());
        return add(Op::number, {}, v);
      }
      std::string name;
      while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) name += s[pos++];
      if (name == "pi") return add(Op::pi, {});
      static const std::pair<const char*, Op> funcs[] = {{"min", Op::min}, {"max", Op::max}, {"sqrt", Op::sqrt},
                                                         {"exp", Op::exp}, {"log", Op::log}, {"abs", Op::abs}};
      for (const auto& [fname, op] : funcs) {
        if (name != fname) continue;
        if (!accept('(')) fail("expected '(' after " + name);
        std::vector<int> args = {expr()};
        while (accept(',')) args.push_back(expr());
        if (!accept(')')) fail("expected ')'");
        const std::size_t want = (op == Op::min || op == Op::max) ? 2 : 1;
        if (args.size() != want) fail(name + " takes " + std::to_string(want) + " argument(s)");
        return add(op, std::move(args));
      }
      fail(name.empty() ? "expected a value" : "unknown name '" + name + "'");
    }
  };

  [[nodiscard]] double eval(int i, double pi) const {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const auto arg = [&](std::size_t k) { return eval(n.args[k], pi); };
    switch (n.op) {
      case Op::number: return n.value;
      case Op::pi: return pi;
      case Op::add: return arg(0) + arg(1);
      case Op::sub: return arg(0) - arg(1);
      case Op::mul: return arg(0) * arg(1);
      case Op::div: return arg(0) / arg(1);
      case Op::pow: return std::pow(arg(0), arg(1));
      case Op::neg: return -arg(0);
      case Op::min: return std::min(arg(0), arg(1));
      case Op::max: return std::max(arg(0), arg(1));
      case Op::sqrt: return std::sqrt(arg(0));
      case Op::exp: return std::exp(arg(0));
      case Op::log: return std::log(arg(0));
      case Op::abs: return std::fabs(arg(0));
    }
    return NAN;
  }

  std::string text_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace ncsa::sensitivity
