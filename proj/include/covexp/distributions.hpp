#pragma once

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/geometric.hpp>
#include <boost/math/distributions/laplace.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <boost/math/distributions/rayleigh.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "covexp/calculus.hpp"
#include "covexp/errors.hpp"
#include "covexp/quadrature.hpp"
#include "covexp/rational.hpp"
#include "covexp/rng.hpp"

namespace covexp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kNormTolBuiltin = 1e-10;
inline constexpr double kNormTolUser = 1e-8;
inline constexpr double kDefaultTail = 1e-14;

enum class LawKind { Continuous, Discrete };
enum class FamilyType { None, IntegratedPearson, CumulativeOrd };

struct Family {
  FamilyType type = FamilyType::None;
  double delta = 0.0, beta = 0.0, gamma = 0.0;
  // Exact coefficients, present for Ord members with rational parameters.
  std::optional<Rational> delta_q, beta_q, gamma_q;

  bool is_pearson() const { return type == FamilyType::IntegratedPearson; }
  bool is_ord() const { return type == FamilyType::CumulativeOrd; }
};

/// Monotone coordinate in which integrals against p are taken.
struct CoordinateHint {
  enum class Type { Identity, Arctan, Cdf };
  Type type = Type::Identity;
  double center = 0.0;
  double scale = 1.0;
};

using Params = std::map<std::string, double>;

class DistributionSpec {
 public:
  struct Parts {
    LawKind kind = LawKind::Continuous;
    std::string name;
    Params params;
    double lower = -kInf, upper = kInf;
    RealFn pdf, cdf, sf;
    RealFn quantile;        // may be empty: bisection on cdf
    RealFn upper_quantile;  // q -> x with sf(x) = q; may be empty
    std::optional<double> mean;
    Family family;
    CoordinateHint hint;
    std::vector<double> breakpoints;
    std::function<Rational(long)> exact_weight;  // unnormalized exact pmf
    std::function<double(CounterRng&)> sampler;
    std::optional<TestFunction> score;
    double norm_tol = kNormTolBuiltin;
    bool user_defined = false;
  };

  explicit DistributionSpec(Parts parts) : d_(std::make_shared<const Parts>(std::move(parts))) {}

  LawKind kind() const { return d_->kind; }
  bool is_discrete() const { return d_->kind == LawKind::Discrete; }
  const std::string& name() const { return d_->name; }
  const Params& params() const { return d_->params; }
  double param(const std::string& key) const {
    auto it = d_->params.find(key);
    if (it == d_->params.end()) throw InvalidArgument("distribution has no parameter '" + key + "'");
    return it->second;
  }
  double lower() const { return d_->lower; }
  double upper() const { return d_->upper; }
  bool finite_support() const { return std::isfinite(d_->lower) && std::isfinite(d_->upper); }
  const std::optional<double>& mean() const { return d_->mean; }
  const Family& family() const { return d_->family; }
  const CoordinateHint& hint() const { return d_->hint; }
  const std::vector<double>& breakpoints() const { return d_->breakpoints; }
  bool has_exact_pmf() const { return static_cast<bool>(d_->exact_weight); }
  Rational exact_weight(long x) const {
    if (!d_->exact_weight) throw InvalidArgument("'" + d_->name + "' has no exact pmf");
    return d_->exact_weight(x);
  }
  const std::optional<TestFunction>& score() const { return d_->score; }
  double norm_tol() const { return d_->norm_tol; }
  bool user_defined() const { return d_->user_defined; }

  double pdf(double x) const {
    if (x < d_->lower || x > d_->upper) return 0.0;
    if (is_discrete() && std::round(x) != x) return 0.0;
    return d_->pdf(x);
  }
  double cdf(double x) const {
    if (x < d_->lower) return 0.0;
    if (x >= d_->upper) return 1.0;
    return d_->cdf(is_discrete() ? std::floor(x) : x);
  }
  /// P(X > x).
  double sf(double x) const {
    if (x < d_->lower) return 1.0;
    if (x >= d_->upper) return 0.0;
    return d_->sf(is_discrete() ? std::floor(x) : x);
  }

  /// Smallest x with cdf(x) >= u.
  double quantile(double u) const {
    if (u <= 0.0) return d_->lower;
    if (u >= 1.0) return d_->upper;
    if (d_->quantile) return d_->quantile(u);
    return bisect([&](double x) { return cdf(x) >= u; });
  }
  /// Smallest x with sf(x) <= q.
  double upper_quantile(double q) const {
    if (q <= 0.0) return d_->upper;
    if (q >= 1.0) return d_->lower;
    if (d_->upper_quantile) return d_->upper_quantile(q);
    return bisect([&](double x) { return sf(x) <= q; });
  }
  double median() const { return quantile(0.5); }

  double sample(CounterRng& rng) const { return d_->sampler(rng); }

  /// Interior point with positive mass or density.
  bool positive_at(double x) const { return pdf(x) > 0.0 && (is_discrete() || (x > d_->lower && x < d_->upper)); }

 private:
  template <class Pred>
  double bisect(Pred&& reached) const {
    double lo = d_->lower, hi = d_->upper;
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      double m = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0);
      double step = 1.0;
      if (!std::isfinite(lo)) {
        lo = m - step;
        while (reached(lo)) {
          step *= 2;
          lo = m - step;
          if (step > 1e300) break;
        }
      }
      step = 1.0;
      if (!std::isfinite(hi)) {
        hi = m + step;
        while (!reached(hi)) {
          step *= 2;
          hi = m + step;
          if (step > 1e300) break;
        }
      }
    }
    if (is_discrete()) {
      long a = static_cast<long>(std::floor(lo)), b = static_cast<long>(std::ceil(hi));
      if (reached(static_cast<double>(a))) return static_cast<double>(a);
      while (b - a > 1) {
        long mid = a + (b - a) / 2;
        (reached(static_cast<double>(mid)) ? b : a) = mid;
      }
      return static_cast<double>(b);
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++i) {
      double mid = 0.5 * (lo + hi);
      (reached(mid) ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  }

  std::shared_ptr<const Parts> d_;
};

// ---------------------------------------------------------------------------
// Helpers for parameter handling

namespace detail {

inline double take(Params& p, std::initializer_list<const char*> keys, std::optional<double> fallback) {
  for (const char* k : keys) {
    auto it = p.find(k);
    if (it != p.end()) {
      double v = it->second;
      p.erase(it);
      return v;
    }
  }
  if (!fallback) throw InvalidArgument(std::string("missing parameter '") + *keys.begin() + "'");
  return *fallback;
}

inline void reject_leftovers(const std::string& name, const Params& p) {
  if (!p.empty()) throw InvalidArgument("unknown parameter '" + p.begin()->first + "' for " + name);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

/// a + b x + sum_i c_i / (x - r_i), with analytic jets.
inline TestFunction pole_sum(std::string name, double a, double b, std::vector<std::pair<double, double>> poles) {
  return TestFunction::with_jet(std::move(name), [a, b, poles](double x, int order) {
    Series s(static_cast<std::size_t>(order) + 1, 0.0);
    s[0] = a + b * x;
    if (order >= 1) s[1] = b;
    for (auto [c, r] : poles) {
      double d = x - r;
      if (d == 0.0) throw DomainError("score evaluated at its pole");
      double term = c / d;
      for (int i = 0; i <= order; ++i) {
        s[static_cast<std::size_t>(i)] += term;
        term *= -1.0 / d;
      }
    }
    return s;
  });
}

template <class Dist>
void install_boost(DistributionSpec::Parts& parts, const Dist& dist) {
  parts.pdf = [dist](double x) { return boost::math::pdf(dist, x); };
  parts.cdf = [dist](double x) { return boost::math::cdf(dist, x); };
  parts.sf = [dist](double x) { return boost::math::cdf(boost::math::complement(dist, x)); };
  if (parts.kind == LawKind::Continuous) {
    parts.quantile = [dist](double u) { return boost::math::quantile(dist, u); };
    parts.upper_quantile = [dist](double q) { return boost::math::quantile(boost::math::complement(dist, q)); };
  }
}

/// Inverse-cdf sampler over a window carrying all but ~1e-17 of the mass.
inline void install_table_sampler(DistributionSpec::Parts& parts, long lo, long hi) {
  auto cum = std::make_shared<std::vector<double>>();
  double total = 0.0;
  for (long x = lo; x <= hi; ++x) {
    total += parts.pdf(static_cast<double>(x));
    cum->push_back(total);
  }
  for (double& c : *cum) c /= total;
  parts.sampler = [cum, lo](CounterRng& rng) {
    double u = rng.uniform();
    auto it = std::lower_bound(cum->begin(), cum->end(), u);
    if (it == cum->end()) --it;
    return static_cast<double>(lo + (it - cum->begin()));
  };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Truncation

/// Smallest window [a*, b*] with P(X < a*) <= eps/2 and P(X > b*) <= eps/2.
inline std::pair<double, double> truncate_support(const DistributionSpec& spec, double eps_tail) {
  if (spec.finite_support()) return {spec.lower(), spec.upper()};
  if (!(eps_tail > 0.0 && eps_tail < 1.0)) throw InvalidArgument("tail mass must lie in (0, 1)");
  const double half = 0.5 * eps_tail;
  double a = spec.lower(), b = spec.upper();
  if (spec.is_discrete()) {
    if (!std::isfinite(a)) {
      // Largest integer a with P(X <= a - 1) <= half.
      double q = spec.quantile(half);
      a = spec.cdf(q) <= half ? q + 1 : q;
      while (spec.cdf(a - 1) > half) a -= 1;
    }
    if (!std::isfinite(b)) b = spec.upper_quantile(half);
    return {a, b};
  }
  if (!std::isfinite(a)) a = spec.quantile(half);
  if (!std::isfinite(b)) b = spec.upper_quantile(half);
  return {a, b};
}

// ---------------------------------------------------------------------------
// Built-in laws

inline DistributionSpec builtin(const std::string& name, Params params = {}) {
  using namespace boost::math;
  using detail::require;
  using detail::take;
  DistributionSpec::Parts parts;
  parts.name = name;
  Params rest = params;

  if (name == "normal") {
    double mu = take(rest, {"mu", "mean", "loc"}, 0.0);
    double sigma = take(rest, {"sigma", "sd", "scale"}, 1.0);
    require(sigma > 0 && std::isfinite(mu), "normal needs sigma > 0");
    normal_distribution<double> d(mu, sigma);
    detail::install_boost(parts, d);
    parts.params = {{"mu", mu}, {"sigma", sigma}};
    parts.mean = mu;
    parts.family.type = FamilyType::IntegratedPearson;
    parts.family.gamma = sigma * sigma;
    parts.sampler = [mu, sigma](CounterRng& r) { return mu + sigma * r.normal(); };
    Rational s2 = exact_decimal(sigma) * exact_decimal(sigma);
    parts.score = TestFunction(Polynomial({Rational(-exact_decimal(mu) / s2), Rational(1 / s2)}), "score");
  } else if (name == "beta") {
    double a = take(rest, {"a", "alpha"}, std::nullopt);
    double b = take(rest, {"b", "beta"}, std::nullopt);
    require(a > 0 && b > 0, "beta needs a > 0 and b > 0");
    beta_distribution<double> d(a, b);
    detail::install_boost(parts, d);
    parts.lower = 0.0;
    parts.upper = 1.0;
    parts.params = {{"a", a}, {"b", b}};
    parts.mean = a / (a + b);
    parts.family.type = FamilyType::IntegratedPearson;
    parts.family.delta = -1.0 / (a + b);
    parts.family.beta = 1.0 / (a + b);
    parts.sampler = [a, b](CounterRng& r) {
      double x = r.gamma(a);
      double y = r.gamma(b);
      return x / (x + y);
    };
    if (a >= 1 && b >= 1 && (a > 1 || b > 1)) {
      parts.score = detail::pole_sum("score", 0.0, 0.0, {{-(a - 1), 0.0}, {-(b - 1), 1.0}});
    }
  } else if (name == "gamma") {
    double shape = take(rest, {"shape", "alpha", "k"}, std::nullopt);
    double scale = 1.0;
    if (rest.count("rate")) {
      scale = 1.0 / take(rest, {"rate"}, std::nullopt);
    } else {
      scale = take(rest, {"scale", "theta"}, 1.0);
    }
    require(shape > 0 && scale > 0, "gamma needs shape > 0 and scale > 0");
    gamma_distribution<double> d(shape, scale);
    detail::install_boost(parts, d);
    parts.lower = 0.0;
    parts.params = {{"shape", shape}, {"scale", scale}};
    parts.mean = shape * scale;
    parts.family.type = FamilyType::IntegratedPearson;
    parts.family.beta = scale;
    parts.sampler = [shape, scale](CounterRng& r) { return scale * r.gamma(shape); };
    if (shape > 1) parts.score = detail::pole_sum("score", 1.0 / scale, 0.0, {{-(shape - 1), 0.0}});
  } else if (name == "student") {
    double nu = take(rest, {"nu", "df"}, std::nullopt);
    require(nu > 0, "student needs nu > 0");
    students_t_distribution<double> d(nu);
    detail::install_boost(parts, d);
    parts.params = {{"nu", nu}};
    if (nu > 1) {
      parts.mean = 0.0;
      parts.family.type = FamilyType::IntegratedPearson;
      parts.family.delta = 1.0 / (nu - 1);
      parts.family.gamma = nu / (nu - 1);
    }
    parts.sampler = [nu](CounterRng& r) {
      double z = r.normal();
      double chi = 2.0 * r.gamma(0.5 * nu);
      return z / std::sqrt(chi / nu);
    };
  } else if (name == "laplace") {
    double mu = take(rest, {"mu", "loc"}, 0.0);
    double b = take(rest, {"b", "scale"}, 1.0);
    require(b > 0, "laplace needs scale > 0");
    laplace_distribution<double> d(mu, b);
    detail::install_boost(parts, d);
    parts.params = {{"mu", mu}, {"b", b}};
    parts.mean = mu;
    parts.breakpoints = {mu};
    parts.sampler = [mu, b](CounterRng& r) {
      double u = r.uniform() - 0.5;
      return mu - b * (u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
    };
  } else if (name == "rayleigh") {
    double sigma = take(rest, {"sigma", "scale"}, 1.0);
    require(sigma > 0, "rayleigh needs sigma > 0");
    rayleigh_distribution<double> d(sigma);
    detail::install_boost(parts, d);
    parts.lower = 0.0;
    parts.params = {{"sigma", sigma}};
    parts.mean = sigma * std::sqrt(kPi / 2.0);
    parts.sampler = [sigma](CounterRng& r) { return sigma * std::sqrt(-2.0 * std::log(r.uniform())); };
    parts.score = detail::pole_sum("score", 0.0, 1.0 / (sigma * sigma), {{-1.0, 0.0}});
  } else if (name == "cauchy") {
    double loc = take(rest, {"loc", "x0", "mu"}, 0.0);
    double scale = take(rest, {"scale", "gamma"}, 1.0);
    require(scale > 0, "cauchy needs scale > 0");
    cauchy_distribution<double> d(loc, scale);
    detail::install_boost(parts, d);
    parts.params = {{"loc", loc}, {"scale", scale}};
    parts.hint = {CoordinateHint::Type::Arctan, loc, scale};
    parts.sampler = [loc, scale](CounterRng& r) { return loc + scale * std::tan(kPi * (r.uniform() - 0.5)); };
  } else if (name == "levy") {
    double mu = take(rest, {"mu", "loc"}, 0.0);
    double c = take(rest, {"c", "scale"}, 1.0);
    require(c > 0, "levy needs scale c > 0");
    parts.lower = mu;
    parts.params = {{"mu", mu}, {"c", c}};
    parts.pdf = [mu, c](double x) {
      double y = x - mu;
      if (y <= 0) return 0.0;
      return std::sqrt(c / (2.0 * kPi)) * std::exp(-c / (2.0 * y)) / (y * std::sqrt(y));
    };
    parts.cdf = [mu, c](double x) {
      double y = x - mu;
      return y <= 0 ? 0.0 : boost::math::erfc(std::sqrt(c / (2.0 * y)));
    };
    parts.sf = [mu, c](double x) {
      double y = x - mu;
      return y <= 0 ? 1.0 : boost::math::erf(std::sqrt(c / (2.0 * y)));
    };
    parts.quantile = [mu, c](double u) {
      double z = boost::math::erfc_inv(u);
      return mu + c / (2.0 * z * z);
    };
    parts.upper_quantile = [mu, c](double q) {
      double z = boost::math::erf_inv(q);
      return mu + c / (2.0 * z * z);
    };
    parts.hint = {CoordinateHint::Type::Cdf, mu, c};
    parts.sampler = [mu, c](CounterRng& r) {
      double z = r.normal();
      return mu + c / (z * z);
    };
  } else if (name == "binomial") {
    double nd = take(rest, {"n"}, std::nullopt);
    double theta = take(rest, {"theta", "p"}, std::nullopt);
    require(nd >= 1 && std::floor(nd) == nd, "binomial needs integer n >= 1");
    require(theta > 0 && theta < 1, "binomial needs 0 < theta < 1");
    long n = static_cast<long>(nd);
    parts.kind = LawKind::Discrete;
    binomial_distribution<double> d(nd, theta);
    detail::install_boost(parts, d);
    parts.lower = 0.0;
    parts.upper = nd;
    parts.params = {{"n", nd}, {"theta", theta}};
    parts.mean = nd * theta;
    Rational tq = exact_decimal(theta);
    parts.family.type = FamilyType::CumulativeOrd;
    parts.family.beta = -theta;
    parts.family.gamma = nd * theta;
    parts.family.delta_q = Rational(0);
    parts.family.beta_q = Rational(-tq);
    parts.family.gamma_q = Rational(tq * n);
    parts.exact_weight = [n, tq](long x) -> Rational {
      if (x < 0 || x > n) return Rational(0);
      BigInt c = 1;
      for (long j = 1; j <= x; ++j) c = c * (n - x + j) / j;
      return Rational(c) * rational_pow(tq, static_cast<unsigned>(x)) * rational_pow(Rational(1 - tq), static_cast<unsigned>(n - x));
    };
    detail::install_table_sampler(parts, 0, n);
  } else if (name == "poisson") {
    double lambda = take(rest, {"lambda", "mu", "rate"}, std::nullopt);
    require(lambda > 0, "poisson needs lambda > 0");
    parts.kind = LawKind::Discrete;
    poisson_distribution<double> d(lambda);
    detail::install_boost(parts, d);
    parts.lower = 0.0;
    parts.params = {{"lambda", lambda}};
    parts.mean = lambda;
    Rational lq = exact_decimal(lambda);
    parts.family.type = FamilyType::CumulativeOrd;
    parts.family.gamma = lambda;
    parts.family.delta_q = Rational(0);
    parts.family.beta_q = Rational(0);
    parts.family.gamma_q = lq;
    // lambda^x / x!; the e^{-lambda} factor cancels on renormalization.
    parts.exact_weight = [lq](long x) -> Rational {
      if (x < 0) return Rational(0);
      return rational_pow(lq, static_cast<unsigned>(x)) / factorial_exact(static_cast<int>(x));
    };
    double hi = boost::math::quantile(boost::math::complement(d, 1e-17));
    detail::install_table_sampler(parts, 0, static_cast<long>(hi) + 1);
  } else if (name == "geometric") {
    double theta = take(rest, {"theta", "p"}, std::nullopt);
    require(theta > 0 && theta < 1, "geometric needs 0 < theta < 1");
    parts.kind = LawKind::Discrete;
    geometric_distribution<double> d(theta);
    detail::install_boost(parts, d);
    parts.lower = 0.0;
    parts.params = {{"theta", theta}};
    parts.mean = (1 - theta) / theta;
    Rational tq = exact_decimal(theta);
    Rational r = (1 - tq) / tq;
    parts.family.type = FamilyType::CumulativeOrd;
    parts.family.beta = (1 - theta) / theta;
    parts.family.gamma = (1 - theta) / theta;
    parts.family.delta_q = Rational(0);
    parts.family.beta_q = r;
    parts.family.gamma_q = r;
    parts.exact_weight = [tq](long x) -> Rational {
      if (x < 0) return Rational(0);
      return tq * rational_pow(Rational(1 - tq), static_cast<unsigned>(x));
    };
    long hi = static_cast<long>(std::ceil(std::log(1e-17) / std::log1p(-theta)));
    detail::install_table_sampler(parts, 0, hi);
  } else {
    throw InvalidArgument("unknown distribution '" + name + "'");
  }
  detail::reject_leftovers(name, rest);
  if (!parts.sampler) throw InvalidArgument("no sampler for " + name);
  return DistributionSpec(std::move(parts));
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"normal",  "beta",   "gamma",    "student",
                                                 "laplace", "rayleigh", "cauchy", "levy",
                                                 "binomial", "poisson", "geometric"};
  return names;
}

// ---------------------------------------------------------------------------
// User-supplied laws

/// Finite pmf on {lo, ..., lo + n - 1}; exact masses are renormalized to sum to one.
inline DistributionSpec tabulated_pmf(long lo, std::vector<Rational> mass, std::string name = "pmf") {
  if (mass.empty()) throw ConfigError("empty pmf");
  if (mass.size() > 1'000'000) throw ConfigError("pmf table too large");
  Rational total = 0;
  for (const auto& m : mass) {
    if (m < 0) throw ConfigError("pmf has a negative entry");
    if (m == 0) throw ConfigError("pmf has a zero entry inside its support");
    total += m;
  }
  if (std::abs(to_double(total) - 1.0) > kNormTolUser) {
    throw ConfigError("pmf mass " + std::to_string(to_double(total)) + " deviates from 1");
  }
  for (auto& m : mass) m /= total;
  const long hi = lo + static_cast<long>(mass.size()) - 1;
  auto q = std::make_shared<const std::vector<Rational>>(mass);
  auto d = std::make_shared<std::vector<double>>();
  for (const auto& m : mass) d->push_back(to_double(m));
  auto cum = std::make_shared<std::vector<double>>();
  {
    Rational acc = 0;
    for (const auto& m : mass) {
      acc += m;
      cum->push_back(to_double(acc));
    }
  }
  DistributionSpec::Parts parts;
  parts.kind = LawKind::Discrete;
  parts.name = std::move(name);
  parts.user_defined = true;
  parts.norm_tol = kNormTolUser;
  parts.lower = static_cast<double>(lo);
  parts.upper = static_cast<double>(hi);
  parts.pdf = [d, lo](double x) { return (*d)[static_cast<std::size_t>(static_cast<long>(x) - lo)]; };
  parts.cdf = [cum, lo](double x) { return (*cum)[static_cast<std::size_t>(static_cast<long>(x) - lo)]; };
  parts.sf = [q, lo](double x) {
    Rational acc = 0;
    for (std::size_t i = static_cast<std::size_t>(static_cast<long>(x) - lo) + 1; i < q->size(); ++i) acc += (*q)[i];
    return to_double(acc);
  };
  Rational mean = 0;
  for (std::size_t i = 0; i < mass.size(); ++i) mean += mass[i] * (lo + static_cast<long>(i));
  parts.mean = to_double(mean);
  parts.exact_weight = [q, lo, hi](long x) -> Rational {
    if (x < lo || x > hi) return Rational(0);
    return (*q)[static_cast<std::size_t>(x - lo)];
  };
  parts.sampler = [cum, lo](CounterRng& rng) {
    double u = rng.uniform() * cum->back();
    auto it = std::lower_bound(cum->begin(), cum->end(), u);
    if (it == cum->end()) --it;
    return static_cast<double>(lo + (it - cum->begin()));
  };
  return DistributionSpec(std::move(parts));
}

/// Continuous law from an unnormalized-within-tolerance density on (lower, upper).
inline DistributionSpec density_law(RealFn density, double lower, double upper, std::string name = "density") {
  if (!(lower < upper)) throw ConfigError("density support must satisfy lower < upper");
  // Validation grid in a coordinate that covers infinite ends.
  auto to_t = [&](double s) {
    if (std::isfinite(lower) && std::isfinite(upper)) return lower + (upper - lower) * s;
    if (std::isfinite(lower)) return lower + s / (1 - s);
    if (std::isfinite(upper)) return upper - (1 - s) / s;
    return std::tan(kPi * (s - 0.5));
  };
  for (int i = 1; i < 200; ++i) {
    double t = to_t(i / 200.0);
    double v = density(t);
    if (!std::isfinite(v) || v < 0) throw ConfigError("density is negative or non-finite at x = " + std::to_string(t));
    if (v == 0) throw ConfigError("density vanishes inside its support at x = " + std::to_string(t));
  }
  QuadratureOptions opts;
  opts.abs_tol = 1e-13;
  opts.rel_tol = 1e-12;
  double mass;
  try {
    mass = integrate(density, lower, upper, {}, opts);
  } catch (const ConvergenceError& e) {
    throw ConfigError(std::string("density is not integrable: ") + e.what());
  }
  if (std::abs(mass - 1.0) > kNormTolUser) {
    throw ConfigError("density mass " + std::to_string(mass) + " deviates from 1");
  }
  auto pdf = [density, mass](double x) { return density(x) / mass; };

  DistributionSpec::Parts parts;
  parts.kind = LawKind::Continuous;
  parts.name = std::move(name);
  parts.user_defined = true;
  parts.norm_tol = kNormTolUser;
  parts.lower = lower;
  parts.upper = upper;
  parts.pdf = pdf;

  // Cumulative table on a mapped grid; cdf and sf refine from the nearest node.
  const int nodes = 512;
  auto grid = std::make_shared<std::vector<double>>();
  auto cum = std::make_shared<std::vector<double>>();
  grid->push_back(lower);
  cum->push_back(0.0);
  for (int i = 1; i < nodes; ++i) {
    double t = to_t(static_cast<double>(i) / nodes);
    cum->push_back(cum->back() + integrate(pdf, grid->back(), t, {}, opts));
    grid->push_back(t);
  }
  double tail = integrate(pdf, grid->back(), upper, {}, opts);
  grid->push_back(upper);
  cum->push_back(cum->back() + tail);
  const double total = cum->back();
  for (double& c : *cum) c /= total;
  auto cdf = [grid, cum, pdf, opts, total](double x) {
    auto it = std::upper_bound(grid->begin(), grid->end(), x);
    std::size_t i = static_cast<std::size_t>(it - grid->begin()) - 1;
    double extra = integrate(pdf, (*grid)[i], x, {}, opts) / total;
    return std::clamp((*cum)[i] + extra, 0.0, 1.0);
  };
  auto sf = [grid, cum, pdf, opts, total](double x) {
    auto it = std::upper_bound(grid->begin(), grid->end(), x);
    std::size_t i = static_cast<std::size_t>(it - grid->begin());
    double extra = integrate(pdf, x, (*grid)[i], {}, opts) / total;
    return std::clamp(1.0 - (*cum)[i] + extra, 0.0, 1.0);
  };
  parts.cdf = cdf;
  parts.sf = sf;
  auto quant = [grid, cum, cdf, pdf](double u) {
    auto it = std::lower_bound(cum->begin(), cum->end(), u);
    std::size_t i = static_cast<std::size_t>(std::max<long>(1, it - cum->begin()));
    double lo = (*grid)[i - 1], hi = (*grid)[i];
    if (!std::isfinite(lo)) lo = hi - 1;
    while (cdf(lo) > u) lo = hi - 2 * (hi - lo);
    if (!std::isfinite(hi)) hi = lo + 1;
    while (cdf(hi) < u) hi = lo + 2 * (hi - lo);
    for (int k = 0; k < 100 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo)); ++k) {
      double mid = 0.5 * (lo + hi);
      (cdf(mid) >= u ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  };
  parts.quantile = quant;
  parts.sampler = [quant](CounterRng& rng) { return quant(rng.uniform()); };
  try {
    parts.mean = integrate([&](double x) { return x * pdf(x); }, lower, upper, {}, opts);
  } catch (const ConvergenceError&) {
    parts.mean.reset();
  }
  return DistributionSpec(std::move(parts));
}

// ---------------------------------------------------------------------------
// Finite discrete views

/// A discrete law restricted to [lo, hi] and renormalized there, in arithmetic T.
template <class T>
class DiscreteLaw {
 public:
  using value_type = T;

  DiscreteLaw(long lo, std::vector<T> mass) : lo_(lo), mass_(std::move(mass)) {
    if (mass_.empty()) throw InvalidArgument("empty discrete law");
  }

  long lo() const { return lo_; }
  long hi() const { return lo_ + static_cast<long>(mass_.size()) - 1; }
  std::size_t size() const { return mass_.size(); }
  bool contains(long x) const { return x >= lo() && x <= hi(); }
  const T& p(long x) const { return mass_[static_cast<std::size_t>(x - lo_)]; }
  T p_or_zero(long x) const { return contains(x) ? p(x) : T(0); }
  const std::vector<T>& masses() const { return mass_; }

  template <class F>
  T expect(F&& f) const {
    T s(0);
    for (long x = lo(); x <= hi(); ++x) s += p(x) * f(x);
    return s;
  }
  T mean() const {
    return expect([](long x) { return T(x); });
  }

 private:
  long lo_;
  std::vector<T> mass_;
};

inline std::pair<long, long> discrete_window(const DistributionSpec& spec, double eps_tail = kDefaultTail) {
  if (!spec.is_discrete()) throw InvalidArgument("'" + spec.name() + "' is not discrete");
  auto [a, b] = truncate_support(spec, eps_tail);
  return {static_cast<long>(a), static_cast<long>(b)};
}

template <class T>
DiscreteLaw<T> make_discrete_law(const DistributionSpec& spec, double eps_tail = kDefaultTail) {
  auto [lo, hi] = discrete_window(spec, eps_tail);
  if (hi - lo > 5'000'000) throw InvalidArgument("discrete window too large");
  std::vector<T> mass;
  T total(0);
  for (long x = lo; x <= hi; ++x) {
    T w;
    if constexpr (std::is_same_v<T, Rational>) {
      w = spec.exact_weight(x);
    } else {
      w = spec.pdf(static_cast<double>(x));
    }
    if (!(w > 0)) throw DomainError("zero mass at x = " + std::to_string(x) + " inside the support");
    total += w;
    mass.push_back(w);
  }
  if (total != T(1)) {
    for (auto& m : mass) m /= total;
  }
  return DiscreteLaw<T>(lo, std::move(mass));
}

// ---------------------------------------------------------------------------
// Integration against p in the law's coordinate

/// Returns the vector integral of fn(t) p(t) dt over [lo, hi] (continuous) or the
/// sum over integers of fn(t) p(t) (discrete, over the truncated window).
template <class F>
std::vector<double> integrate_against(const DistributionSpec& spec, F&& fn, std::size_t dim, double lo, double hi,
                                      const QuadratureOptions& opts = {}) {
  lo = std::max(lo, spec.lower());
  hi = std::min(hi, spec.upper());
  std::vector<double> out(dim, 0.0);
  if (!(lo < hi) && !(spec.is_discrete() && lo == hi)) return out;
  if (spec.is_discrete()) {
    auto [wa, wb] = discrete_window(spec);
    long a = std::max(static_cast<long>(std::ceil(lo)), wa);
    long b = std::min(static_cast<long>(std::floor(hi)), wb);
    for (long x = a; x <= b; ++x) {
      double px = spec.pdf(static_cast<double>(x));
      if (px == 0.0) continue;
      std::vector<double> v = fn(static_cast<double>(x));
      for (std::size_t c = 0; c < dim; ++c) out[c] += v[c] * px;
    }
    return out;
  }
  const CoordinateHint& h = spec.hint();
  auto zero_if_massless = [dim](double p) { return p == 0.0 ? std::optional<std::vector<double>>(std::vector<double>(dim, 0.0)) : std::nullopt; };
  switch (h.type) {
    case CoordinateHint::Type::Identity: {
      std::vector<double> bps;
      for (double b : spec.breakpoints()) {
        if (b > lo && b < hi) bps.push_back(b);
      }
      auto g = [&](double t) {
        double p = spec.pdf(t);
        if (auto z = zero_if_massless(p)) return *z;
        std::vector<double> v = fn(t);
        for (double& x : v) x *= p;
        return v;
      };
      return integrate_vector(g, dim, lo, hi, bps, opts).value;
    }
    case CoordinateHint::Type::Arctan: {
      double ua = std::atan((lo - h.center) / h.scale);
      double ub = std::atan((hi - h.center) / h.scale);
      auto g = [&](double u) {
        double s = std::tan(u);
        double t = h.center + h.scale * s;
        double w = spec.pdf(t) * h.scale * (1.0 + s * s);
        if (auto z = zero_if_massless(w)) return *z;
        std::vector<double> v = fn(t);
        for (double& x : v) x *= w;
        return v;
      };
      return integrate_vector(g, dim, ua, ub, {}, opts).value;
    }
    case CoordinateHint::Type::Cdf: {
      double ua = spec.cdf(lo);
      double ub = std::isinf(hi) ? 1.0 : spec.cdf(hi);
      auto g = [&](double u) {
        double t = spec.quantile(u);
        if (!std::isfinite(t)) return std::vector<double>(dim, 0.0);
        return fn(t);
      };
      return integrate_vector(g, dim, ua, ub, {}, opts).value;
    }
  }
  return out;
}

template <class F>
double integrate_against(const DistributionSpec& spec, F&& fn, double lo, double hi, const QuadratureOptions& opts = {}) {
  auto g = [&](double t) { return std::vector<double>{fn(t)}; };
  return integrate_against(spec, g, 1, lo, hi, opts)[0];
}

/// E[fn(X)] over the whole support (split at the median for continuous laws).
template <class F>
double expectation(const DistributionSpec& spec, F&& fn, const QuadratureOptions& opts = {}) {
  if (spec.is_discrete()) return integrate_against(spec, fn, spec.lower(), spec.upper(), opts);
  double m = spec.median();
  return integrate_against(spec, fn, spec.lower(), m, opts) + integrate_against(spec, fn, m, spec.upper(), opts);
}

}  // namespace covexp
