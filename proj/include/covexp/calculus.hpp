#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <type_traits>
#include <variant>
#include <vector>

#include "covexp/errors.hpp"
#include "covexp/rational.hpp"

namespace covexp {

inline constexpr double kPositivityFloor = 1e-300;
inline constexpr int kFiniteDifferenceCap = 4;

// ---------------------------------------------------------------------------
// Sign sequences

inline int a_of(int ell) { return ell == 1 ? 1 : 0; }
inline int b_of(int ell) { return ell == -1 ? 1 : 0; }

class SignSequence {
 public:
  SignSequence() = default;

  explicit SignSequence(std::vector<int> entries) : entries_(std::move(entries)) {
    bool any_zero = false, any_nonzero = false;
    for (int e : entries_) {
      if (e != -1 && e != 0 && e != 1) throw InvalidArgument("sign entries must be -1, 0 or +1");
      (e == 0 ? any_zero : any_nonzero) = true;
    }
    if (any_zero && any_nonzero) {
      throw InvalidArgument("sign sequence mixes continuous (0) and discrete (+/-) entries");
    }
  }

  static SignSequence continuous(int n) { return SignSequence(std::vector<int>(n, 0)); }
  static SignSequence all_minus(int n) { return SignSequence(std::vector<int>(n, -1)); }

  /// "+-+" style strings; "0" or "000" for the continuous case.
  static SignSequence parse(std::string_view text) {
    std::vector<int> e;
    for (char c : text) {
      if (c == '+') {
        e.push_back(1);
      } else if (c == '-') {
        e.push_back(-1);
      } else if (c == '0') {
        e.push_back(0);
      } else if (c != ' ' && c != ',') {
        throw InvalidArgument(std::string("bad sign character '") + c + "'");
      }
    }
    if (e.empty()) throw InvalidArgument("empty sign sequence");
    return SignSequence(std::move(e));
  }

  int size() const { return static_cast<int>(entries_.size()); }
  bool empty() const { return entries_.empty(); }
  bool is_continuous() const { return !entries_.empty() && entries_.front() == 0; }

  /// The k-th entry, 1-based as in the expansion.
  int at(int k) const {
    if (k < 1 || k > size()) throw InvalidArgument("sign index out of range");
    return entries_[static_cast<std::size_t>(k - 1)];
  }

  /// Number of '+' among the first k entries.
  int plus_count(int k) const {
    int n = 0;
    for (int i = 1; i <= k; ++i) n += a_of(at(i));
    return n;
  }
  /// Number of '-' among the first k entries.
  int minus_count(int k) const {
    int n = 0;
    for (int i = 1; i <= k; ++i) n += b_of(at(i));
    return n;
  }

  SignSequence prefix(int k) const {
    if (k > size()) throw InvalidArgument("sign sequence shorter than requested order");
    return SignSequence(std::vector<int>(entries_.begin(), entries_.begin() + k));
  }

  /// A continuous sequence stretches to any length; a discrete one must already be long enough.
  SignSequence for_order(int n) const {
    if (is_continuous()) return continuous(std::max(n, size()));
    if (size() < n) {
      throw InvalidArgument("sign sequence '" + str() + "' is shorter than order " + std::to_string(n));
    }
    return *this;
  }

  const std::vector<int>& entries() const { return entries_; }

  std::string str() const {
    std::string s;
    for (int e : entries_) s += e == 1 ? '+' : (e == -1 ? '-' : '0');
    return s;
  }

  bool operator==(const SignSequence&) const = default;

 private:
  std::vector<int> entries_;
};

/// Every sequence in {+,-}^k, in lexicographic order with '+' first.
inline std::vector<SignSequence> all_discrete_signs(int k) {
  std::vector<SignSequence> out;
  for (unsigned mask = 0; mask < (1u << k); ++mask) {
    std::vector<int> e(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) e[static_cast<std::size_t>(i)] = (mask >> (k - 1 - i)) & 1u ? -1 : 1;
    out.emplace_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Factorials

template <class T>
T rising_factorial(const T& y, int k) {
  if (k < 0) throw InvalidArgument("factorial order must be non-negative");
  T r(1);
  for (int j = 0; j < k; ++j) r *= y + T(j);
  return r;
}

template <class T>
T falling_factorial(const T& y, int k) {
  if (k < 0) throw InvalidArgument("factorial order must be non-negative");
  T r(1);
  for (int j = 0; j < k; ++j) r *= y - T(j);
  return r;
}

inline double factorial(int k) { return std::tgamma(k + 1.0); }

inline Rational factorial_exact(int k) {
  BigInt r = 1;
  for (int j = 2; j <= k; ++j) r *= j;
  return Rational(r);
}

// ---------------------------------------------------------------------------
// Exact polynomials

class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(std::vector<Rational> coefficients) : c_(std::move(coefficients)) { normalize(); }

  static Polynomial monomial(int degree, Rational coefficient = 1) {
    std::vector<Rational> c(static_cast<std::size_t>(degree) + 1, Rational(0));
    c.back() = coefficient;
    return Polynomial(std::move(c));
  }
  static Polynomial identity() { return Polynomial({Rational(0), Rational(1)}); }
  static Polynomial constant(Rational v) { return Polynomial({std::move(v)}); }

  /// Constant-first coefficient list such as "0,0,1" (x^2) or "1/2, -3".
  static Polynomial parse(std::string_view text) {
    std::vector<Rational> c;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t comma = text.find(',', start);
      std::string_view part = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      c.push_back(parse_rational(part));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return Polynomial(std::move(c));
  }

  int degree() const { return c_.empty() ? -1 : static_cast<int>(c_.size()) - 1; }
  bool is_zero() const { return c_.empty(); }
  const std::vector<Rational>& coefficients() const { return c_; }
  Rational coefficient(int i) const {
    return i >= 0 && i < static_cast<int>(c_.size()) ? c_[static_cast<std::size_t>(i)] : Rational(0);
  }

  Rational operator()(const Rational& x) const {
    Rational r = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) r = r * x + *it;
    return r;
  }
  double operator()(double x) const {
    double r = 0.0;
    for (auto it = d_.rbegin(); it != d_.rend(); ++it) r = r * x + *it;
    return r;
  }

  Polynomial derivative() const {
    std::vector<Rational> d;
    for (std::size_t i = 1; i < c_.size(); ++i) d.push_back(c_[i] * static_cast<long>(i));
    return Polynomial(std::move(d));
  }

  /// p(x + s) as a polynomial in x.
  Polynomial shifted(const Rational& s) const {
    Polynomial r;
    Polynomial lin({s, Rational(1)});
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) r = r * lin + constant(*it);
    return r;
  }

  /// Delta^ell p, with ell = 0 the derivative.
  Polynomial delta(int ell) const {
    if (ell == 0) return derivative();
    Polynomial d = shifted(Rational(ell)) - *this;
    return ell == 1 ? d : d * Rational(-1);
  }

  friend Polynomial operator+(const Polynomial& a, const Polynomial& b) {
    std::vector<Rational> c(std::max(a.c_.size(), b.c_.size()), Rational(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i) c[i] += a.c_[i];
    for (std::size_t i = 0; i < b.c_.size(); ++i) c[i] += b.c_[i];
    return Polynomial(std::move(c));
  }
  friend Polynomial operator-(const Polynomial& a, const Polynomial& b) { return a + b * Rational(-1); }
  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    if (a.is_zero() || b.is_zero()) return Polynomial();
    std::vector<Rational> c(a.c_.size() + b.c_.size() - 1, Rational(0));
    for (std::size_t i = 0; i < a.c_.size(); ++i) {
      for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    }
    return Polynomial(std::move(c));
  }
  friend Polynomial operator*(const Polynomial& a, const Rational& s) {
    std::vector<Rational> c = a.c_;
    for (auto& v : c) v *= s;
    return Polynomial(std::move(c));
  }
  bool operator==(const Polynomial& o) const { return c_ == o.c_; }

  std::string str() const {
    if (c_.empty()) return "0";
    std::ostringstream os;
    for (std::size_t i = 0; i < c_.size(); ++i) os << (i ? "," : "") << c_[i];
    return os.str();
  }

  /// Taylor coefficients of p around x: p(x + t) = sum_i out[i] t^i, for i <= order.
  std::vector<double> jet(double x, int order) const {
    std::vector<double> a = d_;
    std::vector<double> out(static_cast<std::size_t>(order) + 1, 0.0);
    // Repeated synthetic division by (t - x).
    for (int i = 0; i <= order && !a.empty(); ++i) {
      double r = 0.0;
      std::vector<double> q(a.size() > 1 ? a.size() - 1 : 0, 0.0);
      for (std::size_t j = a.size(); j-- > 0;) {
        double next = r * x + a[j];
        if (j > 0) q[j - 1] = next;
        r = next;
      }
      out[static_cast<std::size_t>(i)] = r;
      a = std::move(q);
    }
    return out;
  }

 private:
  void normalize() {
    while (!c_.empty() && c_.back() == 0) c_.pop_back();
    d_.clear();
    for (const auto& v : c_) d_.push_back(to_double(v));
  }

  std::vector<Rational> c_;
  std::vector<double> d_;
};

// ---------------------------------------------------------------------------
// Truncated Taylor series arithmetic (coefficients of t^i around a point)

using Series = std::vector<double>;

inline Series series_mul(const Series& a, const Series& b) {
  std::size_t n = std::min(a.size(), b.size());
  Series c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) c[i] += a[j] * b[i - j];
  }
  return c;
}

inline Series series_div(const Series& a, const Series& b) {
  std::size_t n = std::min(a.size(), b.size());
  if (n == 0) return {};
  if (std::abs(b[0]) < kPositivityFloor) throw DomainError("series division by a vanishing leading term");
  Series c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = a[i];
    for (std::size_t j = 1; j <= i; ++j) s -= b[j] * c[i - j];
    c[i] = s / b[0];
  }
  return c;
}

inline Series series_derivative(const Series& a) {
  Series d;
  for (std::size_t i = 1; i < a.size(); ++i) d.push_back(a[i] * static_cast<double>(i));
  return d;
}

inline Series series_integral(const Series& a, double constant) {
  Series r{constant};
  for (std::size_t i = 0; i < a.size(); ++i) r.push_back(a[i] / static_cast<double>(i + 1));
  return r;
}

// ---------------------------------------------------------------------------
// Test functions

using RealFn = std::function<double(double)>;
using JetFn = std::function<Series(double, int)>;

/// m-th derivative of g at x by the central m-th difference, step eps^(1/(m+2)).
inline double finite_difference(const RealFn& g, double x, int m) {
  if (m == 0) return g(x);
  const double eps = std::numeric_limits<double>::epsilon();
  const double step = std::pow(eps, 1.0 / (m + 2)) * std::max(1.0, std::abs(x));
  double s = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= m; ++j) {
    double node = x + (0.5 * m - j) * step;
    s += ((j % 2) ? -binom : binom) * g(node);
    binom = binom * (m - j) / (j + 1);
  }
  return s / std::pow(step, m);
}

class TestFunction {
 public:
  enum class Kind { Polynomial, Callable, Jet, Table, ContinuousQuotient, DiscreteQuotient };

  TestFunction() : TestFunction(Polynomial()) {}
  TestFunction(Polynomial p, std::string name = {}) : node_(std::make_shared<Node>()) {
    node_->kind = Kind::Polynomial;
    node_->name = name.empty() ? "poly(" + p.str() + ")" : std::move(name);
    node_->poly = std::move(p);
  }

  static TestFunction polynomial(std::vector<Rational> c) { return TestFunction(Polynomial(std::move(c))); }
  static TestFunction identity() { return TestFunction(Polynomial::identity(), "x"); }

  /// Continuous function with an optional explicit derivative chain (f', f'', ...).
  static TestFunction callable(std::string name, RealFn f, std::vector<RealFn> chain = {}) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Callable;
    n->name = std::move(name);
    n->fn = std::move(f);
    n->chain = std::move(chain);
    return TestFunction(std::move(n));
  }

  /// Continuous function whose Taylor jet is supplied directly.
  static TestFunction with_jet(std::string name, JetFn jet) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Jet;
    n->name = std::move(name);
    n->jet = std::move(jet);
    return TestFunction(std::move(n));
  }

  /// Values on the integer window [lo, lo + values.size() - 1].
  static TestFunction table(long lo, std::vector<Rational> values, std::string name = "table") {
    if (values.empty()) throw InvalidArgument("empty discrete table");
    auto n = std::make_shared<Node>();
    n->kind = Kind::Table;
    n->name = std::move(name);
    n->lo = lo;
    for (const auto& v : values) n->table_d.push_back(to_double(v));
    n->table = std::move(values);
    return TestFunction(std::move(n));
  }

  /// num' / den' (continuous iteration step).
  static TestFunction continuous_quotient(TestFunction num, TestFunction den) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::ContinuousQuotient;
    n->name = "d(" + num.name() + ")/d(" + den.name() + ")";
    n->children = {std::move(num), std::move(den)};
    return TestFunction(std::move(n));
  }

  /// Delta^d num / Delta^d den with d = +1 or -1 (discrete iteration step).
  static TestFunction discrete_quotient(TestFunction num, TestFunction den, int d) {
    if (d != 1 && d != -1) throw InvalidArgument("discrete quotient direction must be +1 or -1");
    auto n = std::make_shared<Node>();
    n->kind = Kind::DiscreteQuotient;
    n->name = std::string(d == 1 ? "D+" : "D-") + "(" + num.name() + ")/" + (d == 1 ? "D+" : "D-") + "(" +
              den.name() + ")";
    n->direction = d;
    n->children = {std::move(num), std::move(den)};
    return TestFunction(std::move(n));
  }

  Kind kind() const { return node_->kind; }
  const std::string& name() const { return node_->name; }
  const Polynomial* as_polynomial() const { return node_->kind == Kind::Polynomial ? &node_->poly : nullptr; }

  /// Same node, or equal polynomials.
  bool same_node(const TestFunction& other) const {
    if (node_ == other.node_) return true;
    const Polynomial* a = as_polynomial();
    const Polynomial* b = other.as_polynomial();
    return a && b && *a == *b;
  }

  bool is_identity() const {
    return node_->kind == Kind::Polynomial && node_->poly == Polynomial::identity();
  }

  /// True when values at integers can be produced in exact rational arithmetic.
  bool is_exact() const {
    switch (node_->kind) {
      case Kind::Polynomial:
      case Kind::Table:
        return true;
      case Kind::DiscreteQuotient:
        return node_->children[0].is_exact() && node_->children[1].is_exact();
      default:
        return false;
    }
  }

  std::optional<std::pair<long, long>> table_window() const {
    if (node_->kind != Kind::Table) return std::nullopt;
    return std::make_pair(node_->lo, node_->lo + static_cast<long>(node_->table.size()) - 1);
  }

  double operator()(double x) const {
    const Node& n = *node_;
    switch (n.kind) {
      case Kind::Polynomial:
        return n.poly(x);
      case Kind::Callable:
        return n.fn(x);
      case Kind::Jet:
        return n.jet(x, 0)[0];
      case Kind::Table:
        return n.table_d[table_index(x)];
      case Kind::ContinuousQuotient:
        return jet(x, 0)[0];
      case Kind::DiscreteQuotient: {
        const double d = n.direction;
        double num = n.children[0](x + d) - n.children[0](x);
        double den = n.children[1](x + d) - n.children[1](x);
        return num / checked_step(den / d) / d;
      }
    }
    return 0.0;
  }

  Rational exact(const Rational& x) const {
    const Node& n = *node_;
    switch (n.kind) {
      case Kind::Polynomial:
        return n.poly(x);
      case Kind::Table:
        return n.table[table_index(to_double(x))];
      case Kind::DiscreteQuotient: {
        Rational d(n.direction);
        Rational num = n.children[0].exact(x + d) - n.children[0].exact(x);
        Rational den = n.children[1].exact(x + d) - n.children[1].exact(x);
        checked_step(to_double(den / d));
        if (den == 0) throw DomainError("vanishing difference of h");
        return num / den;
      }
      default:
        throw InvalidArgument("test function '" + n.name + "' has no exact representation");
    }
  }

  template <class T>
  T eval(const T& x) const {
    if constexpr (std::is_same_v<T, Rational>) {
      return exact(x);
    } else {
      return (*this)(x);
    }
  }

  /// Taylor coefficients around x up to `order`.
  Series jet(double x, int order) const {
    const Node& n = *node_;
    switch (n.kind) {
      case Kind::Polynomial:
        return n.poly.jet(x, order);
      case Kind::Jet: {
        Series s = n.jet(x, order);
        if (static_cast<int>(s.size()) < order + 1) {
          throw InvalidArgument("jet of '" + n.name + "' too short for the requested order");
        }
        s.resize(static_cast<std::size_t>(order) + 1);
        return s;
      }
      case Kind::Callable: {
        Series s(static_cast<std::size_t>(order) + 1);
        s[0] = n.fn(x);
        double fact = 1.0;
        const int have = static_cast<int>(n.chain.size());
        for (int m = 1; m <= order; ++m) {
          fact *= m;
          double d;
          if (m <= have) {
            d = n.chain[static_cast<std::size_t>(m - 1)](x);
          } else {
            int extra = m - have;
            if (extra > kFiniteDifferenceCap) {
              throw InvalidArgument("derivative order " + std::to_string(m) + " of '" + n.name +
                                    "' exceeds the finite-difference cap");
            }
            const RealFn& base = have == 0 ? n.fn : n.chain[static_cast<std::size_t>(have - 1)];
            d = finite_difference(base, x, extra);
          }
          s[static_cast<std::size_t>(m)] = d / fact;
        }
        return s;
      }
      case Kind::ContinuousQuotient: {
        Series num = series_derivative(n.children[0].jet(x, order + 1));
        Series den = series_derivative(n.children[1].jet(x, order + 1));
        checked_step(den[0]);
        return series_div(num, den);
      }
      case Kind::Table:
      case Kind::DiscreteQuotient:
        throw InvalidArgument("'" + n.name + "' is a discrete function and has no derivatives");
    }
    return {};
  }

  double derivative(double x) const { return jet(x, 1)[1]; }

 private:
  struct Node {
    Kind kind = Kind::Polynomial;
    std::string name;
    Polynomial poly;
    RealFn fn;
    std::vector<RealFn> chain;
    JetFn jet;
    long lo = 0;
    std::vector<Rational> table;
    std::vector<double> table_d;
    int direction = 1;
    std::vector<TestFunction> children;
  };

  explicit TestFunction(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  std::size_t table_index(double x) const {
    const Node& n = *node_;
    double r = std::round(x);
    if (r != x) throw InvalidArgument("discrete table '" + n.name + "' evaluated at a non-integer");
    long i = static_cast<long>(r) - n.lo;
    if (i < 0 || i >= static_cast<long>(n.table.size())) {
      throw InvalidArgument("point " + std::to_string(static_cast<long>(r)) + " outside the window of '" +
                            n.name + "'");
    }
    return static_cast<std::size_t>(i);
  }

  static double checked_step(double dh) {
    if (!(dh >= kPositivityFloor)) {
      std::ostringstream os;
      os << "difference of h is " << dh << ", below the positivity floor";
      throw DomainError(os.str());
    }
    return dh;
  }

  std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// Difference operators

/// Delta^ell f(x) = (f(x + ell) - f(x)) / ell, and f'(x) for ell = 0.
template <class T>
T delta(const TestFunction& f, int ell, const T& x) {
  if (ell == 0) {
    if constexpr (std::is_same_v<T, Rational>) {
      if (auto* p = f.as_polynomial()) return p->derivative()(x);
      throw InvalidArgument("exact derivative needs a polynomial");
    } else {
      if (f.kind() == TestFunction::Kind::Table) throw InvalidArgument("derivative of a discrete table");
      if (auto* p = f.as_polynomial()) return p->derivative()(x);
      return f.derivative(x);
    }
  }
  if (ell != 1 && ell != -1) throw InvalidArgument("difference direction must be -1, 0 or +1");
  T l(ell);
  return (f.eval(T(x + l)) - f.eval(x)) / l;
}

/// f_k from f_0 = f, f_i = Delta^{-ell_i} f_{i-1} / Delta^{-ell_i} h_i, where h_1 may be
/// overridden and h_i = h for i >= 2.
inline TestFunction iterate_f(const TestFunction& f, const TestFunction& h, const SignSequence& signs, int k,
                              const std::optional<TestFunction>& h1 = std::nullopt) {
  if (k < 0) throw InvalidArgument("iteration count must be non-negative");
  if (k > 0 && k > signs.size() && !signs.is_continuous()) {
    throw InvalidArgument("sign sequence shorter than iteration count");
  }
  TestFunction cur = f;
  for (int i = 1; i <= k; ++i) {
    const TestFunction& hi = (i == 1 && h1) ? *h1 : h;
    const int d = signs.is_continuous() ? 0 : -signs.at(i);
    const Polynomial* fp = cur.as_polynomial();
    const Polynomial* hp = hi.as_polynomial();
    if (fp && hp) {
      Polynomial dh = hp->delta(d);
      if (dh.degree() <= 0) {
        Rational c = dh.coefficient(0);
        if (!(c > 0)) throw DomainError("difference of h is not positive");
        cur = TestFunction(fp->delta(d) * Rational(1 / c));
        continue;
      }
    }
    if (d == 0) {
      if (cur.kind() == TestFunction::Kind::Table || cur.kind() == TestFunction::Kind::DiscreteQuotient) {
        throw InvalidArgument("continuous iteration of a discrete function");
      }
      cur = TestFunction::continuous_quotient(cur, hi);
    } else {
      cur = TestFunction::discrete_quotient(cur, hi, d);
    }
  }
  return cur;
}

}  // namespace covexp
