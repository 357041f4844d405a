#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "covexp/errors.hpp"

namespace covexp {

/// Small arithmetic grammar for user densities: numbers, the variable x, named
/// parameters, pi and e; + - * / ^; exp log sqrt abs sin cos tan atan.
class Expression {
 public:
  static Expression compile(std::string_view text, const std::map<std::string, double>& params = {}) {
    Parser p{text, 0, params};
    auto root = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected trailing input");
    Expression e;
    e.root_ = std::move(root);
    e.text_ = std::string(text);
    return e;
  }

  double operator()(double x) const { return root_->eval(x); }
  const std::string& text() const { return text_; }

 private:
  struct Node {
    char op = 0;  // 'n' number, 'x' variable, 'f' function, binary operators, 'u' negation
    double value = 0.0;
    std::string fn;
    std::shared_ptr<Node> lhs, rhs;

    double eval(double x) const {
      switch (op) {
        case 'n':
          return value;
        case 'x':
          return x;
        case 'u':
          return -lhs->eval(x);
        case '+':
          return lhs->eval(x) + rhs->eval(x);
        case '-':
          return lhs->eval(x) - rhs->eval(x);
        case '*':
          return lhs->eval(x) * rhs->eval(x);
        case '/':
          return lhs->eval(x) / rhs->eval(x);
        case '^':
          return std::pow(lhs->eval(x), rhs->eval(x));
        case 'f': {
          double a = lhs->eval(x);
          if (fn == "exp") return std::exp(a);
          if (fn == "log") return std::log(a);
          if (fn == "sqrt") return std::sqrt(a);
          if (fn == "abs") return std::abs(a);
          if (fn == "sin") return std::sin(a);
          if (fn == "cos") return std::cos(a);
          if (fn == "tan") return std::tan(a);
          return std::atan(a);
        }
      }
      return 0.0;
    }
  };
  using NodePtr = std::shared_ptr<Node>;

  struct Parser {
    std::string_view s;
    std::size_t pos;
    const std::map<std::string, double>& params;

    [[noreturn]] void fail(const std::string& why) const {
      throw ConfigError("density expression: " + why + " at offset " + std::to_string(pos));
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    static NodePtr bin(char op, NodePtr a, NodePtr b) {
      auto n = std::make_shared<Node>();
      n->op = op;
      n->lhs = std::move(a);
      n->rhs = std::move(b);
      return n;
    }
    NodePtr expr() {
      NodePtr n = term();
      for (;;) {
        if (eat('+')) {
          n = bin('+', n, term());
        } else if (eat('-')) {
          n = bin('-', n, term());
        } else {
          return n;
        }
      }
    }
    NodePtr term() {
      NodePtr n = unary();
      for (;;) {
        if (eat('*')) {
          n = bin('*', n, unary());
        } else if (eat('/')) {
          n = bin('/', n, unary());
        } else {
          return n;
        }
      }
    }
    NodePtr unary() {
      if (eat('-')) {
        auto n = std::make_shared<Node>();
        n->op = 'u';
        n->lhs = unary();
        return n;
      }
      if (eat('+')) return unary();
      NodePtr base = primary();
      if (eat('^')) return bin('^', base, unary());
      return base;
    }
    NodePtr primary() {
      skip();
      if (pos >= s.size()) fail("unexpected end of input");
      char c = s[pos];
      if (c == '(') {
        ++pos;
        NodePtr n = expr();
        if (!eat(')')) fail("missing ')'");
        return n;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) ++pos;
        if (pos < s.size() && (s[pos] == 'e' || s[pos] == 'E')) {
          std::size_t save = pos++;
          if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) ++pos;
          if (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
            while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
          } else {
            pos = save;
          }
        }
        auto n = std::make_shared<Node>();
        n->op = 'n';
        try {
          n->value = std::stod(std::string(s.substr(start, pos - start)));
        } catch (const std::exception&) {
          fail("bad number");
        }
        return n;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t start = pos;
        while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        std::string id(s.substr(start, pos - start));
        static const std::vector<std::string> fns = {"exp", "log", "sqrt", "abs", "sin", "cos", "tan", "atan"};
        for (const auto& f : fns) {
          if (id == f) {
            if (!eat('(')) fail("function '" + id + "' needs parentheses");
            auto n = std::make_shared<Node>();
            n->op = 'f';
            n->fn = id;
            n->lhs = expr();
            if (!eat(')')) fail("missing ')'");
            return n;
          }
        }
        auto n = std::make_shared<Node>();
        if (id == "x") {
          n->op = 'x';
        } else if (id == "pi") {
          n->op = 'n';
          n->value = 3.141592653589793238462643383279502884;
        } else if (id == "e") {
          n->op = 'n';
          n->value = 2.718281828459045235360287471352662498;
        } else if (auto it = params.find(id); it != params.end()) {
          n->op = 'n';
          n->value = it->second;
        } else {
          fail("unknown identifier '" + id + "'");
        }
        return n;
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  NodePtr root_;
  std::string text_;
};

}  // namespace covexp
