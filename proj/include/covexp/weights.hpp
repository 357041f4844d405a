#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "covexp/calculus.hpp"
#include "covexp/distributions.hpp"
#include "covexp/errors.hpp"
#include "covexp/parallel.hpp"
#include "covexp/quadrature.hpp"
#include "covexp/stein.hpp"

namespace covexp {

enum class Engine {
  Auto,
  ClosedFormPearson,
  ClosedFormOrd,
  ContinuousGeneric,
  DiscreteNestedSum,
  DiscreteIdentity,
  CdfFormula,
  SpecialCatalog,
  SteinHk,
};

inline std::string engine_name(Engine e) {
  switch (e) {
    case Engine::Auto: return "auto";
    case Engine::ClosedFormPearson: return "closed-pearson";
    case Engine::ClosedFormOrd: return "closed-ord";
    case Engine::ContinuousGeneric: return "continuous-generic";
    case Engine::DiscreteNestedSum: return "discrete-nested";
    case Engine::DiscreteIdentity: return "discrete-identity";
    case Engine::CdfFormula: return "cdf-formula";
    case Engine::SpecialCatalog: return "catalog";
    case Engine::SteinHk: return "stein-hk";
  }
  return "?";
}

inline Engine parse_engine(const std::string& s) {
  for (Engine e : {Engine::Auto, Engine::ClosedFormPearson, Engine::ClosedFormOrd, Engine::ContinuousGeneric,
                   Engine::DiscreteNestedSum, Engine::DiscreteIdentity, Engine::CdfFormula, Engine::SpecialCatalog,
                   Engine::SteinHk}) {
    if (engine_name(e) == s) return e;
  }
  throw InvalidArgument("unknown engine '" + s + "'");
}

// ---------------------------------------------------------------------------
// The test function h

enum class HTag { Id, Cdf, Square, Arctan, Score, User };

inline std::string h_tag_name(HTag t) {
  switch (t) {
    case HTag::Id: return "id";
    case HTag::Cdf: return "cdf";
    case HTag::Square: return "square";
    case HTag::Arctan: return "arctan";
    case HTag::Score: return "score";
    case HTag::User: return "user";
  }
  return "?";
}

/// h for all steps, plus an optional override h1 for the first step only.
struct HChoice {
  HTag tag = HTag::Id;
  TestFunction h = TestFunction::identity();
  std::optional<TestFunction> h1;

  const TestFunction& step(int i) const { return (i == 1 && h1) ? *h1 : h; }
};

inline TestFunction arctan_function() {
  return TestFunction::with_jet("arctan", [](double x, int order) {
    // d/dt atan(x + t) = 1 / (1 + (x + t)^2)
    Series den(static_cast<std::size_t>(order) + 1, 0.0);
    den[0] = 1.0 + x * x;
    if (order >= 1) den[1] = 2.0 * x;
    if (order >= 2) den[2] = 1.0;
    Series one(static_cast<std::size_t>(order) + 1, 0.0);
    one[0] = 1.0;
    Series d = series_div(one, den);
    d.resize(static_cast<std::size_t>(std::max(order, 0)));
    return series_integral(d, std::atan(x));
  });
}

inline TestFunction cdf_function(const DistributionSpec& spec) {
  if (spec.is_discrete()) throw InvalidArgument("h = cdf is only available for continuous laws");
  return TestFunction::callable(
      "cdf", [spec](double x) { return spec.cdf(x); }, {[spec](double x) { return spec.pdf(x); }});
}

inline HChoice make_h(HTag tag, const DistributionSpec& spec) {
  HChoice c;
  c.tag = tag;
  switch (tag) {
    case HTag::Id:
      break;
    case HTag::Square:
      c.h = TestFunction(Polynomial({Rational(0), Rational(0), Rational(1)}), "x^2");
      break;
    case HTag::Arctan:
      c.h = arctan_function();
      break;
    case HTag::Cdf:
      c.h = cdf_function(spec);
      break;
    case HTag::Score:
      if (!spec.score()) {
        throw InvalidArgument("'" + spec.name() + "' has no strictly log-concave score function");
      }
      c.h1 = *spec.score();
      break;
    case HTag::User:
      throw InvalidArgument("user h needs an explicit function");
  }
  return c;
}

inline HChoice user_h(TestFunction h) {
  HChoice c;
  c.tag = h.is_identity() ? HTag::Id : HTag::User;
  c.h = std::move(h);
  return c;
}

/// Accepts id | cdf | square | arctan | score, or a constant-first coefficient list.
inline HChoice parse_h(const std::string& text, const DistributionSpec& spec) {
  static const std::map<std::string, HTag> tags = {
      {"id", HTag::Id}, {"cdf", HTag::Cdf}, {"square", HTag::Square}, {"arctan", HTag::Arctan},
      {"score", HTag::Score}};
  if (auto it = tags.find(text); it != tags.end()) return make_h(it->second, spec);
  std::string body = text.rfind("poly:", 0) == 0 ? text.substr(5) : text;
  return user_h(TestFunction(Polynomial::parse(body)));
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

/// log of k! (j-product) style denominators, switching to log space above k = 10.
inline double pearson_denominator_log(int k, double d) {
  double s = std::lgamma(k + 1.0);
  for (int j = 0; j < k; ++j) s += std::log(1.0 - j * d);
  return s;
}

inline void check_moment_condition(int k, double d) {
  for (int j = 0; j < k; ++j) {
    if (1.0 - j * d <= 0.0) {
      throw DomainError("order " + std::to_string(k) + " needs 1 - j*delta > 0 for j < k (fails at j = " +
                        std::to_string(j) + "): the law lacks the required moments");
    }
  }
}

inline double signed_power_ratio(double base, int k, double log_den) {
  if (base == 0.0) return 0.0;
  double sign = (base < 0 && (k % 2)) ? -1.0 : 1.0;
  return sign * std::exp(k * std::log(std::abs(base)) - log_den);
}

inline std::vector<double> validation_grid(const DistributionSpec& spec, int count = 33) {
  std::vector<double> g;
  for (int i = 1; i <= count; ++i) {
    double x = spec.quantile(0.01 + 0.98 * (i - 1) / (count - 1));
    if (spec.positive_at(x)) g.push_back(x);
  }
  return g;
}

inline void check_nondecreasing(const DistributionSpec& spec, const TestFunction& h) {
  for (double x : validation_grid(spec)) {
    double d = h.derivative(x);
    if (d < 0) throw DomainError("h = " + h.name() + " is decreasing at x = " + std::to_string(x));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Continuous engines

/// Integrated Pearson closed form tau(x)^k / (k! prod_{j<k} (1 - j delta)).
inline double gamma_closed_pearson(const DistributionSpec& spec, int k, double x) {
  const Family& f = spec.family();
  if (!f.is_pearson()) throw InvalidArgument("'" + spec.name() + "' is not an integrated Pearson law");
  if (k < 1) throw InvalidArgument("order must be at least 1");
  detail::check_moment_condition(k, f.delta);
  if (!(spec.pdf(x) > 0.0)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  double tau = (f.delta * x + f.beta) * x + f.gamma;
  if (k > 10) return detail::signed_power_ratio(tau, k, detail::pearson_denominator_log(k, f.delta));
  double den = factorial(k);
  for (int j = 0; j < k; ++j) den *= 1.0 - j * f.delta;
  return std::pow(tau, k) / den;
}

/// P(x)^k (1 - P(x))^k / (k! (k+1)! p(x)): the weight for h = cdf.
inline double gamma_cdf(const DistributionSpec& spec, int k, double x) {
  if (spec.is_discrete()) throw InvalidArgument("cdf weights are for continuous laws");
  if (k < 1) throw InvalidArgument("order must be at least 1");
  double px = spec.pdf(x);
  if (!(px > 0.0)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  double P = spec.cdf(x), S = spec.sf(x);
  double base = P * S;
  if (k > 10) return std::exp(k * std::log(base) - std::lgamma(k + 1.0) - std::lgamma(k + 2.0) - std::log(px));
  return std::pow(base, k) / (factorial(k) * factorial(k + 1) * px);
}

/// p(x) Gamma_k h(x) = [A_{k-1} B_k + A_k B_{k-1}] / (k!(k-1)!), with A_j, B_j the
/// one-sided incomplete moments of h(X) - h(x).  With a first-step override h1 and
/// k >= 2 the split form L_0 R_1 + L_1 R_0 is used instead.
inline double weighted_gamma_continuous_generic(const DistributionSpec& spec, const HChoice& hc, int k, double x,
                                                const QuadratureOptions& opts = {}) {
  if (spec.is_discrete()) throw InvalidArgument("continuous engine on a discrete law");
  if (k < 1) throw InvalidArgument("order must be at least 1");
  if (!(spec.pdf(x) > 0.0)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  const TestFunction& h = (k == 1) ? hc.step(1) : hc.h;
  const double hx = h(x);
  if (k == 1 || !hc.h1) {
    const int j0 = k - 1;
    auto left = [&](double t) {
      double d = hx - h(t);
      double a = std::pow(d, j0);
      return std::vector<double>{a, a * d};
    };
    auto right = [&](double t) {
      double d = h(t) - hx;
      double b = std::pow(d, j0);
      return std::vector<double>{b, b * d};
    };
    auto A = integrate_against(spec, left, 2, spec.lower(), x, opts);
    auto B = integrate_against(spec, right, 2, x, spec.upper(), opts);
    double num = A[0] * B[1] + A[1] * B[0];
    if (k > 10) return num * std::exp(-std::lgamma(k + 1.0) - std::lgamma(static_cast<double>(k)));
    return num / (factorial(k) * factorial(k - 1));
  }
  // First step carries h1': L_e = int_a^x P(y) (h(x)-h(y))^{k-2+e}/(k-2+e)! h1'(y) dy,
  // R_e = int_x^b (1-P(z)) (h(z)-h(x))^{k-2+e}/(k-2+e)! h1'(z) dz.
  const TestFunction& h1 = *hc.h1;
  const int m = k - 2;
  const double f0 = factorial(m), f1 = factorial(m + 1);
  auto left = [&](double y) {
    double P = spec.cdf(y);
    if (P == 0.0) return std::vector<double>{0.0, 0.0};
    double d = hx - h(y);
    double w = P * h1.derivative(y) * std::pow(d, m);
    return std::vector<double>{w / f0, w * d / f1};
  };
  auto right = [&](double z) {
    double S = spec.sf(z);
    if (S == 0.0) return std::vector<double>{0.0, 0.0};
    double d = h(z) - hx;
    double w = S * h1.derivative(z) * std::pow(d, m);
    return std::vector<double>{w / f0, w * d / f1};
  };
  std::vector<double> bl, br;
  for (double b : spec.breakpoints()) (b < x ? bl : br).push_back(b);
  auto L = integrate_vector(left, 2, spec.lower(), x, bl, opts).value;
  auto R = integrate_vector(right, 2, x, spec.upper(), br, opts).value;
  return L[0] * R[1] + L[1] * R[0];
}

inline double gamma_continuous_generic(const DistributionSpec& spec, const HChoice& hc, int k, double x,
                                       const QuadratureOptions& opts = {}) {
  double px = spec.pdf(x);
  if (!(px > 0.0)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  return weighted_gamma_continuous_generic(spec, hc, k, x, opts) / px;
}

inline double gamma_continuous_generic(const DistributionSpec& spec, const TestFunction& h, int k, double x,
                                       const QuadratureOptions& opts = {}) {
  detail::check_nondecreasing(spec, h);
  return gamma_continuous_generic(spec, user_h(h), k, x, opts);
}

/// Gamma_k = (-1)^k (E[H^{k-1}] L H^k(x) - E[H^k] L H^{k-1}(x)), H^j(y) = (h(y)-h(x))^j / j!,
/// evaluated through the inverse Stein operator.
inline double gamma_via_stein_Hk(const DistributionSpec& spec, const TestFunction& h, int k, double x,
                                 const QuadratureOptions& opts = {}) {
  if (spec.is_discrete()) throw InvalidArgument("Stein H^k route is for continuous laws");
  if (k < 1) throw InvalidArgument("order must be at least 1");
  const double hx = h(x);
  auto H = [&](int j) {
    double fj = factorial(j);
    return TestFunction::callable("H^" + std::to_string(j), [hx, j, fj, h](double y) {
      return std::pow(h(y) - hx, j) / fj;
    });
  };
  auto moment = [&](int j) {
    if (j == 0) return 1.0;
    TestFunction Hj = H(j);
    return expectation(spec, [&](double t) { return Hj(t); }, opts);
  };
  auto stein = [&](int j) {
    if (j == 0) return 0.0;
    return inverse_stein(spec, H(j), 0, x, opts);
  };
  double sign = (k % 2) ? -1.0 : 1.0;
  return sign * (moment(k - 1) * stein(k) - moment(k) * stein(k - 1));
}

// ---------------------------------------------------------------------------
// Catalog of special laws

struct WeightValue {
  double gamma = 0.0;
  double ratio = 0.0;  // Gamma_k / Delta^{-ell_k} h_k
};

inline bool catalog_has(const DistributionSpec& spec, HTag tag) {
  const std::string& n = spec.name();
  return (n == "laplace" && tag == HTag::Id) || (n == "rayleigh" && tag == HTag::Square) ||
         (n == "cauchy" && tag == HTag::Arctan) || (n == "levy" && tag == HTag::Cdf);
}

inline WeightValue gamma_catalog(const DistributionSpec& spec, HTag tag, int k, double x) {
  if (k < 1) throw InvalidArgument("order must be at least 1");
  if (!catalog_has(spec, tag)) {
    throw InvalidArgument("no catalog entry for (" + spec.name() + ", h = " + h_tag_name(tag) + ")");
  }
  if (!spec.positive_at(x)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  const std::string& n = spec.name();
  WeightValue w;
  if (n == "laplace") {
    double mu = spec.param("mu"), b = spec.param("b");
    double y = std::abs(x - mu) / b;
    double s = 0.0, term = 1.0;
    for (int j = 0; j <= k; ++j) {
      s += term;
      term *= y / (j + 1);
    }
    w.gamma = std::pow(b, 2 * k) * s;
    w.ratio = w.gamma;
  } else if (n == "rayleigh") {
    double sigma = spec.param("sigma");
    w.ratio = std::pow(2.0, k - 2) * std::pow(sigma, 2 * k) * std::pow(x, 2 * (k - 1)) / factorial(k);
    w.gamma = w.ratio * 2.0 * x;
  } else if (n == "cauchy") {
    if (spec.param("loc") != 0.0 || spec.param("scale") != 1.0) {
      throw InvalidArgument("the Cauchy catalog entry covers the standard law only");
    }
    double a = std::atan(x);
    double bracket = kPi * kPi - 4.0 * a * a;
    w.ratio = std::pow(1.0 + x * x, 2) * std::pow(bracket, k) /
              (std::pow(4.0, k) * factorial(k) * factorial(k + 1));
    w.gamma = w.ratio / (1.0 + x * x);
  } else {
    // 1/p(x)^2 = 2 pi y^3 e^{c/y} / c for the Levy(mu, c) density, y = x - mu.
    double mu = spec.param("mu"), c = spec.param("c");
    double y = x - mu;
    double P = spec.cdf(x), S = spec.sf(x);
    w.ratio = 2.0 * kPi * std::exp(c / y) * y * y * y / c * std::pow(P * S, k) / (factorial(k) * factorial(k + 1));
    w.gamma = w.ratio * spec.pdf(x);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Discrete engines (exact when T = Rational)

/// Cumulative Ord closed form prod_{j<a_k} tau+(x-j) prod_{j<b_k} tau-(x+j) / (k! prod_{j<k}(1 - j delta)).
template <class T>
T gamma_closed_ord(const DistributionSpec& spec, const SignSequence& signs, int k, long x) {
  const Family& f = spec.family();
  if (!f.is_ord()) throw InvalidArgument("'" + spec.name() + "' is not a cumulative Ord law");
  if (k < 1 || k > signs.size() || signs.is_continuous()) throw InvalidArgument("need a discrete sign sequence of length >= k");
  detail::check_moment_condition(k, f.delta);
  T d, b, g;
  if constexpr (std::is_same_v<T, Rational>) {
    if (!f.delta_q) throw InvalidArgument("no exact Ord coefficients");
    d = *f.delta_q;
    b = *f.beta_q;
    g = *f.gamma_q;
  } else {
    d = f.delta;
    b = f.beta;
    g = f.gamma;
  }
  const int ak = signs.plus_count(k), bk = signs.minus_count(k);
  if (x - ak < static_cast<long>(spec.lower()) || x + bk > spec.upper()) return T(0);
  auto tau_minus = [&](long y) { return (d * T(y) + b) * T(y) + g; };
  auto tau_plus = [&](long y) { return T(y) * (d * T(y) + b + T(1)); };
  T num(1);
  for (int j = 0; j < ak; ++j) num *= tau_plus(x - j);
  for (int j = 0; j < bk; ++j) num *= tau_minus(x + j);
  if constexpr (std::is_same_v<T, Rational>) {
    Rational den = factorial_exact(k);
    for (int j = 0; j < k; ++j) den *= 1 - d * j;
    return Rational(num / den);
  } else {
    if (k > 10) {
      if (num == 0.0) return 0.0;
      double sign = num < 0 ? -1.0 : 1.0;
      double lognum = 0.0;
      for (int j = 0; j < ak; ++j) lognum += std::log(std::abs(tau_plus(x - j)));
      for (int j = 0; j < bk; ++j) lognum += std::log(std::abs(tau_minus(x + j)));
      return sign * std::exp(lognum - detail::pearson_denominator_log(k, d));
    }
    double den = factorial(k);
    for (int j = 0; j < k; ++j) den *= 1.0 - j * d;
    return num / den;
  }
}

/// Nested-sum engine for generic h on a finite (or truncated) discrete law.
/// Left and right chains of Delta^{-ell_i} h_i products are cached per outer
/// copy x1, x2; the outer expectation is the literal double sum over (x1, x2).
template <class T>
class NestedSumEngine {
 public:
  NestedSumEngine(DiscreteLaw<T> law, HChoice h, SignSequence signs, int k)
      : law_(std::move(law)), h_(std::move(h)), signs_(std::move(signs)), k_(k) {
    if (k_ < 1) throw InvalidArgument("order must be at least 1");
    if (signs_.is_continuous() || signs_.size() < k_) throw InvalidArgument("need a discrete sign sequence of length >= k");
    build();
  }

  const DiscreteLaw<T>& law() const { return law_; }
  int order() const { return k_; }

  /// p(x) Gamma_k(x).
  T weighted(long x) const {
    const long lo = law_.lo(), hi = law_.hi();
    const long yl = x - a_of(signs_.at(k_));  // y <= yl
    const long zl = x + b_of(signs_.at(k_));  // z >= zl
    if (yl < lo || zl > hi) return T(0);
    const std::size_t iy = static_cast<std::size_t>(yl - lo), iz = static_cast<std::size_t>(zl - lo);
    T total(0);
    for (std::size_t s1 = 0; s1 < n_; ++s1) {
      const T& sl = left_sum_[s1][iy];
      const T& slh = left_hsum_[s1][iy];
      if (sl == 0 && slh == 0) continue;
      T inner(0);
      for (std::size_t s2 = 0; s2 < n_; ++s2) {
        inner += law_.masses()[s2] * (sl * right_hsum_[s2][iz] - slh * right_sum_[s2][iz]);
      }
      total += law_.masses()[s1] * inner;
    }
    return total;
  }

  T gamma(long x) const {
    if (!law_.contains(x)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
    return weighted(x) / law_.p(x);
  }

 private:
  void build() {
    const long lo = law_.lo();
    n_ = law_.size();
    const TestFunction& hk = h_.step(k_);
    std::vector<T> hv(n_);
    for (std::size_t i = 0; i < n_; ++i) hv[i] = hk.eval(T(lo + static_cast<long>(i)));
    // dh[i][y] = Delta^{-ell_i} h_i(y) for the chain steps i = 1 .. k-1.
    std::vector<std::vector<T>> dh(static_cast<std::size_t>(k_));
    for (int i = 1; i < k_; ++i) {
      auto& row = dh[static_cast<std::size_t>(i)];
      row.resize(n_);
      for (std::size_t j = 0; j < n_; ++j) {
        T v = delta(h_.step(i), -signs_.at(i), T(lo + static_cast<long>(j)));
        if (!(to_double(v) >= kPositivityFloor)) {
          throw DomainError("Delta h is not positive at x = " + std::to_string(lo + static_cast<long>(j)));
        }
        row[j] = v;
      }
    }
    left_sum_.assign(n_, {});
    left_hsum_.assign(n_, {});
    right_sum_.assign(n_, {});
    right_hsum_.assign(n_, {});
    for (std::size_t s = 0; s < n_; ++s) {
      // Left chain: y_i >= y_{i-1} + a_i, weight dh_i(y_i).
      std::vector<T> w(n_, T(0));
      w[s] = T(1);
      for (int i = 1; i < k_; ++i) {
        const int a = a_of(signs_.at(i));
        std::vector<T> next(n_, T(0));
        T run(0);
        for (std::size_t y = 0; y < n_; ++y) {
          if (static_cast<long>(y) - a >= 0) run += w[y - static_cast<std::size_t>(a)];
          next[y] = dh[static_cast<std::size_t>(i)][y] * run;
        }
        w = std::move(next);
      }
      auto& ls = left_sum_[s];
      auto& lh = left_hsum_[s];
      ls.resize(n_);
      lh.resize(n_);
      T acc(0), acch(0);
      for (std::size_t y = 0; y < n_; ++y) {
        acc += w[y];
        acch += w[y] * hv[y];
        ls[y] = acc;
        lh[y] = acch;
      }
      // Right chain: z_i <= z_{i-1} - b_i.
      std::vector<T> r(n_, T(0));
      r[s] = T(1);
      for (int i = 1; i < k_; ++i) {
        const int b = b_of(signs_.at(i));
        std::vector<T> next(n_, T(0));
        T run(0);
        for (std::size_t z = n_; z-- > 0;) {
          if (z + static_cast<std::size_t>(b) < n_) run += r[z + static_cast<std::size_t>(b)];
          next[z] = dh[static_cast<std::size_t>(i)][z] * run;
        }
        r = std::move(next);
      }
      auto& rs = right_sum_[s];
      auto& rh = right_hsum_[s];
      rs.resize(n_);
      rh.resize(n_);
      acc = T(0);
      acch = T(0);
      for (std::size_t z = n_; z-- > 0;) {
        acc += r[z];
        acch += r[z] * hv[z];
        rs[z] = acc;
        rh[z] = acch;
      }
    }
  }

  DiscreteLaw<T> law_;
  HChoice h_;
  SignSequence signs_;
  int k_;
  std::size_t n_ = 0;
  // [start][y]: cumulative sums of the chain ending at y (left: y' <= y; right: z' >= z).
  std::vector<std::vector<T>> left_sum_, left_hsum_, right_sum_, right_hsum_;
};

template <class T>
T gamma_discrete_nested(const DiscreteLaw<T>& law, const HChoice& h, const SignSequence& signs, int k, long x) {
  return NestedSumEngine<T>(law, h, signs, k).gamma(x);
}

enum class IdentityMode { DoubleSum, Separable };

/// Identity-h weight: E[(X2-x-b_k+1)^{[k-1]} (x-X1-a_k+1)^{[k-1]} (X2-X1) 1{X1+a_k <= x <= X2-b_k}] / (p(x) k!(k-1)!).
template <class T>
T gamma_discrete_identity(const DiscreteLaw<T>& law, const SignSequence& signs, int k, long x,
                          IdentityMode mode = IdentityMode::Separable) {
  if (k < 1 || signs.is_continuous() || signs.size() < k) throw InvalidArgument("need a discrete sign sequence of length >= k");
  if (!law.contains(x)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  const long ak = signs.plus_count(k), bk = signs.minus_count(k);
  T den;
  if constexpr (std::is_same_v<T, Rational>) {
    den = factorial_exact(k) * factorial_exact(k - 1);
  } else {
    den = factorial(k) * factorial(k - 1);
  }
  den *= law.p(x);
  T total(0);
  if (mode == IdentityMode::DoubleSum) {
    for (long x1 = law.lo(); x1 <= x - ak; ++x1) {
      T v = rising_factorial(T(x - x1 - ak + 1), k - 1);
      for (long x2 = std::max(x + bk, law.lo()); x2 <= law.hi(); ++x2) {
        T u = rising_factorial(T(x2 - x - bk + 1), k - 1);
        total += law.p(x1) * law.p(x2) * u * v * T(x2 - x1);
      }
    }
  } else {
    // With u = X2-x-b_k+1, v = x-X1-a_k+1: X2 - X1 = u + v + k - 2.
    T U0(0), U1(0), V0(0), V1(0);
    for (long x2 = std::max(x + bk, law.lo()); x2 <= law.hi(); ++x2) {
      T u(x2 - x - bk + 1);
      T r = law.p(x2) * rising_factorial(u, k - 1);
      U0 += r;
      U1 += r * u;
    }
    for (long x1 = law.lo(); x1 <= x - ak; ++x1) {
      T v(x - x1 - ak + 1);
      T r = law.p(x1) * rising_factorial(v, k - 1);
      V0 += r;
      V1 += r * v;
    }
    total = U1 * V0 + U0 * V1 + T(k - 2) * U0 * V0;
  }
  return total / den;
}

// ---------------------------------------------------------------------------
// Engine selection and evaluation

struct WeightOptions {
  QuadratureOptions quad;
  double eps_tail = kDefaultTail;
  IdentityMode identity_mode = IdentityMode::Separable;
};

inline Engine resolve_engine(const DistributionSpec& spec, const HChoice& h, Engine requested) {
  const bool plain_id = h.tag == HTag::Id && !h.h1 && h.h.is_identity();
  if (requested == Engine::Auto) {
    if (spec.is_discrete()) {
      if (plain_id) return spec.family().is_ord() ? Engine::ClosedFormOrd : Engine::DiscreteIdentity;
      return Engine::DiscreteNestedSum;
    }
    if (plain_id && spec.family().is_pearson()) return Engine::ClosedFormPearson;
    if (catalog_has(spec, h.tag) && !h.h1) return Engine::SpecialCatalog;
    if (h.tag == HTag::Cdf) return Engine::CdfFormula;
    return Engine::ContinuousGeneric;
  }
  auto mismatch = [&] {
    throw InvalidArgument("engine " + engine_name(requested) + " does not apply to (" + spec.name() +
                          ", h = " + h_tag_name(h.tag) + ")");
  };
  switch (requested) {
    case Engine::ClosedFormPearson:
      if (spec.is_discrete() || !plain_id || !spec.family().is_pearson()) mismatch();
      break;
    case Engine::ClosedFormOrd:
      if (!spec.is_discrete() || !plain_id || !spec.family().is_ord()) mismatch();
      break;
    case Engine::DiscreteIdentity:
      if (!spec.is_discrete() || !plain_id) mismatch();
      break;
    case Engine::DiscreteNestedSum:
      if (!spec.is_discrete()) mismatch();
      break;
    case Engine::ContinuousGeneric:
    case Engine::SteinHk:
      if (spec.is_discrete()) mismatch();
      if (requested == Engine::SteinHk && h.h1) mismatch();
      break;
    case Engine::CdfFormula:
      if (spec.is_discrete() || h.tag != HTag::Cdf) mismatch();
      break;
    case Engine::SpecialCatalog:
      if (!catalog_has(spec, h.tag) || h.h1) mismatch();
      break;
    case Engine::Auto:
      break;
  }
  return requested;
}

/// Exact (or float) discrete weights Gamma_1..Gamma_n for one (law, h, signs) choice.
template <class T>
class DiscreteWeights {
 public:
  DiscreteWeights(const DistributionSpec& spec, HChoice h, SignSequence signs, int n, Engine engine = Engine::Auto,
                  const WeightOptions& opts = {})
      : spec_(spec),
        law_(make_discrete_law<T>(spec, opts.eps_tail)),
        h_(std::move(h)),
        signs_(signs.for_order(n)),
        n_(n),
        engine_(resolve_engine(spec, h_, engine)),
        mode_(opts.identity_mode) {
    if (engine_ == Engine::DiscreteNestedSum) {
      for (int k = 1; k <= n_; ++k) nested_.emplace_back(law_, h_, signs_, k);
    }
  }

  const DiscreteLaw<T>& law() const { return law_; }
  const SignSequence& signs() const { return signs_; }
  const HChoice& h() const { return h_; }
  Engine engine() const { return engine_; }
  int order() const { return n_; }

  /// Gamma_k vanishes outside [lo + a_k, hi - b_k].
  std::pair<long, long> window(int k) const {
    return {law_.lo() + signs_.plus_count(k), law_.hi() - signs_.minus_count(k)};
  }

  T gamma(int k, long x) const {
    check(k);
    switch (engine_) {
      case Engine::ClosedFormOrd: {
        auto [a, b] = window(k);
        if (x < a || x > b) return T(0);
        return gamma_closed_ord<T>(spec_, signs_, k, x);
      }
      case Engine::DiscreteIdentity:
        return gamma_discrete_identity(law_, signs_, k, x, mode_);
      case Engine::DiscreteNestedSum:
        return nested_[static_cast<std::size_t>(k - 1)].gamma(x);
      default:
        throw InvalidArgument("not a discrete engine");
    }
  }

  /// Delta^{-ell_k} h_k(x).
  T dh(int k, long x) const { return delta(h_.step(k), -signs_.at(k), T(x)); }

  T ratio(int k, long x) const { return gamma(k, x) / dh(k, x); }

 private:
  void check(int k) const {
    if (k < 1 || k > n_) throw InvalidArgument("order out of range");
  }

  DistributionSpec spec_;
  DiscreteLaw<T> law_;
  HChoice h_;
  SignSequence signs_;
  int n_;
  Engine engine_;
  IdentityMode mode_;
  std::vector<NestedSumEngine<T>> nested_;
};

/// Floating-point weights for any law; discrete laws go through DiscreteWeights<double>.
class WeightEvaluator {
 public:
  WeightEvaluator(const DistributionSpec& spec, HChoice h, SignSequence signs, int n, Engine engine = Engine::Auto,
                  const WeightOptions& opts = {})
      : spec_(spec), h_(std::move(h)), n_(n), opts_(opts) {
    if (n < 1) throw InvalidArgument("order must be at least 1");
    if (spec.is_discrete()) {
      if (signs.is_continuous()) throw InvalidArgument("discrete law needs a +/- sign sequence");
      discrete_ = std::make_shared<DiscreteWeights<double>>(spec, h_, signs, n, engine, opts);
      signs_ = discrete_->signs();
      engine_ = discrete_->engine();
    } else {
      if (!signs.empty() && !signs.is_continuous()) throw InvalidArgument("continuous law needs the sign sequence 0");
      signs_ = SignSequence::continuous(n);
      engine_ = resolve_engine(spec, h_, engine);
      if (engine_ == Engine::ContinuousGeneric || engine_ == Engine::SteinHk) {
        detail::check_nondecreasing(spec, h_.h);
        if (h_.h1) detail::check_nondecreasing(spec, *h_.h1);
      }
    }
  }

  const DistributionSpec& spec() const { return spec_; }
  const HChoice& h() const { return h_; }
  const SignSequence& signs() const { return signs_; }
  Engine engine() const { return engine_; }
  int order() const { return n_; }
  const DiscreteWeights<double>* discrete() const { return discrete_.get(); }

  double gamma(int k, double x) const {
    if (k < 1 || k > n_) throw InvalidArgument("order out of range");
    if (discrete_) return discrete_->gamma(k, to_integer(x));
    switch (engine_) {
      case Engine::ClosedFormPearson:
        return gamma_closed_pearson(spec_, k, x);
      case Engine::CdfFormula:
        return gamma_cdf(spec_, k, x);
      case Engine::SpecialCatalog:
        return gamma_catalog(spec_, h_.tag, k, x).gamma;
      case Engine::SteinHk:
        return gamma_via_stein_Hk(spec_, h_.h, k, x, opts_.quad);
      default:
        return gamma_continuous_generic(spec_, h_, k, x, opts_.quad);
    }
  }

  /// p(x) Gamma_k(x); avoids dividing by a tiny density in the tails.
  double weighted(int k, double x) const {
    if (!discrete_ && engine_ == Engine::ContinuousGeneric) {
      if (spec_.pdf(x) == 0.0) return 0.0;
      return weighted_gamma_continuous_generic(spec_, h_, k, x, opts_.quad);
    }
    double p = spec_.pdf(x);
    if (p == 0.0) return 0.0;
    return gamma(k, x) * p;
  }

  /// Delta^{-ell_k} h_k(x); the derivative in the continuous case.
  double dh(int k, double x) const {
    if (discrete_) return discrete_->dh(k, to_integer(x));
    return h_.step(k).derivative(x);
  }

  WeightValue value(int k, double x) const {
    WeightValue v;
    v.gamma = gamma(k, x);
    v.ratio = (engine_ == Engine::SpecialCatalog) ? gamma_catalog(spec_, h_.tag, k, x).ratio : v.gamma / dh(k, x);
    return v;
  }

 private:
  static long to_integer(double x) {
    if (std::round(x) != x) throw DomainError("discrete law evaluated at a non-integer point");
    return static_cast<long>(x);
  }

  DistributionSpec spec_;
  HChoice h_;
  SignSequence signs_;
  int n_;
  Engine engine_ = Engine::Auto;
  WeightOptions opts_;
  std::shared_ptr<DiscreteWeights<double>> discrete_;
};

// ---------------------------------------------------------------------------
// Weight tables

struct WeightTable {
  std::vector<double> grid;
  std::vector<int> orders;
  // values[i][j]: Gamma_{orders[j]}(grid[i]); ratios likewise.
  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> ratios;
  Engine engine = Engine::Auto;
  HTag h_tag = HTag::Id;
  std::string h_name;
  SignSequence signs;
  std::vector<double> dropped;  // grid points outside the positive-density set
};

inline WeightTable build_weight_table(const WeightEvaluator& ev, const std::vector<double>& grid,
                                      const std::vector<int>& orders, unsigned threads = 1) {
  WeightTable t;
  t.orders = orders;
  t.engine = ev.engine();
  t.h_tag = ev.h().tag;
  t.h_name = ev.h().h1 ? ev.h().h1->name() : ev.h().h.name();
  t.signs = ev.signs();
  for (double x : grid) {
    if (ev.spec().positive_at(x)) {
      t.grid.push_back(x);
    } else {
      t.dropped.push_back(x);
    }
  }
  t.values.assign(t.grid.size(), std::vector<double>(orders.size(), 0.0));
  t.ratios = t.values;
  parallel_for(
      t.grid.size(),
      [&](std::size_t i) {
        for (std::size_t j = 0; j < orders.size(); ++j) {
          WeightValue v = ev.value(orders[j], t.grid[i]);
          t.values[i][j] = v.gamma;
          t.ratios[i][j] = v.ratio;
        }
      },
      threads);
  return t;
}

}  // namespace covexp
