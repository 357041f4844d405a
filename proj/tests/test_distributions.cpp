#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "covexp/config.hpp"
#include "covexp/distributions.hpp"
#include "covexp/quadrature.hpp"

using namespace covexp;

namespace {

const std::vector<std::pair<std::string, Params>>& all_builtins() {
  static const std::vector<std::pair<std::string, Params>> laws = {
      {"normal", {}},
      {"normal", {{"mu", 1.5}, {"sigma", 2}}},
      {"beta", {{"a", 2}, {"b", 3}}},
      {"gamma", {{"shape", 3}, {"scale", 1}}},
      {"student", {{"nu", 5}}},
      {"laplace", {}},
      {"rayleigh", {}},
      {"cauchy", {}},
      {"levy", {}},
      {"binomial", {{"n", 10}, {"theta", 0.3}}},
      {"poisson", {{"lambda", 2}}},
      {"geometric", {{"theta", 0.5}}},
  };
  return laws;
}

}  // namespace

TEST(Builtin, FamilyCoefficients) {
  auto n = builtin("normal");
  EXPECT_TRUE(n.family().is_pearson());
  EXPECT_EQ(n.family().delta, 0.0);
  EXPECT_EQ(n.family().beta, 0.0);
  EXPECT_EQ(n.family().gamma, 1.0);

  auto b = builtin("beta", {{"a", 2}, {"b", 3}});
  EXPECT_TRUE(b.family().is_pearson());
  EXPECT_DOUBLE_EQ(b.family().delta, -0.2);
  EXPECT_DOUBLE_EQ(b.family().beta, 0.2);
  EXPECT_DOUBLE_EQ(b.family().gamma, 0.0);

  auto bin = builtin("binomial", {{"n", 10}, {"theta", 0.3}});
  EXPECT_TRUE(bin.family().is_ord());
  EXPECT_DOUBLE_EQ(bin.family().delta, 0.0);
  EXPECT_DOUBLE_EQ(bin.family().beta, -0.3);
  EXPECT_DOUBLE_EQ(bin.family().gamma, 3.0);
  EXPECT_EQ(*bin.family().beta_q, Rational(-3, 10));
  EXPECT_EQ(*bin.family().gamma_q, Rational(3));

  EXPECT_FALSE(builtin("laplace").family().is_pearson());
}

TEST(Builtin, RejectsBadParameters) {
  EXPECT_THROW(builtin("beta", {{"a", -1}, {"b", 2}}), InvalidArgument);
  EXPECT_THROW(builtin("binomial", {{"n", 10}, {"theta", 1.5}}), InvalidArgument);
  EXPECT_THROW(builtin("binomial", {{"n", 2.5}, {"theta", 0.5}}), InvalidArgument);
  EXPECT_THROW(builtin("normal", {{"sigma", 1}, {"bogus", 3}}), InvalidArgument);
  EXPECT_THROW(builtin("weibull"), InvalidArgument);
}

TEST(Builtin, MassIsOne) {
  for (const auto& [name, params] : all_builtins()) {
    auto spec = builtin(name, params);
    double mass;
    if (spec.is_discrete()) {
      auto [lo, hi] = discrete_window(spec, 1e-15);
      mass = 0.0;
      for (long x = lo; x <= hi; ++x) mass += spec.pdf(static_cast<double>(x));
    } else {
      mass = integrate([&](double x) { return spec.pdf(x); }, spec.lower(), spec.upper(), {spec.median()});
    }
    EXPECT_NEAR(mass, 1.0, 1e-8) << name;
  }
}

TEST(Builtin, CdfQuantileRoundTripAndMonotone) {
  for (const auto& [name, params] : all_builtins()) {
    auto spec = builtin(name, params);
    double prev = -std::numeric_limits<double>::infinity();
    for (double u : {0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
      double q = spec.quantile(u);
      EXPECT_GE(q, prev) << name;
      prev = q;
      if (!spec.is_discrete()) {
        EXPECT_NEAR(spec.cdf(q), u, 1e-10) << name;
        EXPECT_NEAR(spec.cdf(q) + spec.sf(q), 1.0, 1e-12) << name;
      } else {
        EXPECT_GE(spec.cdf(q), u - 1e-12) << name;
      }
    }
  }
}

TEST(Builtin, SampleMeanMatches) {
  for (const auto& [name, params] : all_builtins()) {
    auto spec = builtin(name, params);
    if (!spec.mean() || name == "student") continue;
    CounterRng rng(3, 17);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      double x = spec.sample(rng);
      s += x;
      s2 += x * x;
    }
    double m = s / n, se = std::sqrt((s2 / n - m * m) / n);
    EXPECT_NEAR(m, *spec.mean(), 5 * se) << name;
  }
}

TEST(Builtin, OrdKernelRecursion) {
  // p(x-1) tau-(x-1) = p(x) tau+(x) on a cumulative Ord law.
  for (const auto& [name, params] : std::vector<std::pair<std::string, Params>>{
           {"binomial", {{"n", 10}, {"theta", 0.3}}}, {"poisson", {{"lambda", 2}}}, {"geometric", {{"theta", 0.5}}}}) {
    auto spec = builtin(name, params);
    const Family& f = spec.family();
    auto tau_minus = [&](double y) { return (f.delta * y + f.beta) * y + f.gamma; };
    auto tau_plus = [&](double y) { return y * (f.delta * y + f.beta + 1.0); };
    for (long x = 1; x <= 10; ++x) {
      double xd = static_cast<double>(x);
      EXPECT_NEAR(spec.pdf(xd - 1) * tau_minus(xd - 1), spec.pdf(xd) * tau_plus(xd), 1e-12) << name << " x=" << x;
    }
  }
}

TEST(Truncation, Windows) {
  auto bin = builtin("binomial", {{"n", 10}, {"theta", 0.3}});
  EXPECT_EQ(discrete_window(bin, 1e-12), std::make_pair(0L, 10L));

  // Gaussian quantile at 5e-13, computed to 40 digits with mpmath.
  auto [a, b] = truncate_support(builtin("normal"), 1e-12);
  EXPECT_NEAR(a, -7.1305068481713245, 1e-9);
  EXPECT_NEAR(b, 7.1305068481713245, 1e-9);

  // Smallest b with P(X > b) <= 5e-13, by cumulative pmf summation in mpmath.
  EXPECT_EQ(discrete_window(builtin("poisson", {{"lambda", 2}}), 1e-12), std::make_pair(0L, 19L));
  EXPECT_EQ(discrete_window(builtin("geometric", {{"theta", 0.5}}), 1e-12), std::make_pair(0L, 40L));
  EXPECT_THROW(truncate_support(builtin("normal"), 0.0), InvalidArgument);
}

TEST(DiscreteLawView, ExactMassesSumToOne) {
  auto law = make_discrete_law<Rational>(builtin("binomial", {{"n", 10}, {"theta", 0.3}}));
  Rational total = 0;
  for (long x = law.lo(); x <= law.hi(); ++x) total += law.p(x);
  EXPECT_EQ(total, Rational(1));
  EXPECT_EQ(law.mean(), Rational(3));
  EXPECT_EQ(law.p(0), rational_pow(Rational(7, 10), 10));
}

TEST(Pmf, TabulatedRejectsZerosAndBadMass) {
  EXPECT_THROW(tabulated_pmf(0, {Rational(1, 2), Rational(0), Rational(1, 2)}), ConfigError);
  EXPECT_THROW(tabulated_pmf(0, {}), ConfigError);
  EXPECT_THROW(tabulated_pmf(0, {Rational(1), Rational(3)}), ConfigError);
  auto spec = tabulated_pmf(3, {Rational(1, 4), Rational(3, 4)});
  auto law = make_discrete_law<Rational>(spec);
  EXPECT_EQ(law.lo(), 3);
  EXPECT_EQ(law.p(4), Rational(3, 4));
}

TEST(Config, PmfAndBuiltinDocuments) {
  using nlohmann::json;
  auto coin = distribution_from_json(json::parse(R"({"kind":"discrete","pmf":[0.5,0.5],"support":[0,1]})"));
  EXPECT_TRUE(coin.is_discrete());
  EXPECT_DOUBLE_EQ(coin.pdf(1), 0.5);

  auto three = distribution_from_json(json::parse(R"({"kind":"discrete","pmf":[0.2,0.3,0.5],"support":[0,2]})"));
  EXPECT_EQ(make_discrete_law<Rational>(three).mean(), Rational(13, 10));

  auto lap = distribution_from_json(json::parse(R"({"builtin":"laplace"})"));
  auto ref = builtin("laplace");
  for (double x : {-2.0, 0.0, 1.3}) EXPECT_EQ(lap.pdf(x), ref.pdf(x));

  auto wrapped = distribution_from_json(
      json::parse(R"({"distribution":{"builtin":"binomial","params":{"n":4,"theta":0.5}}})"));
  EXPECT_DOUBLE_EQ(wrapped.pdf(2), 6.0 / 16.0);

  EXPECT_THROW(distribution_from_json(json::parse(R"({"kind":"discrete","pmf":[0.5,0.5],"support":[0,3]})")),
               ConfigError);
  EXPECT_THROW(distribution_from_json(json::parse(R"({"builtin":"nope"})")), ConfigError);
  EXPECT_THROW(distribution_from_json(json::parse(R"({"kind":"discrete"})")), ConfigError);
}

TEST(Config, DensityExpression) {
  using nlohmann::json;
  auto g = distribution_from_json(
      json::parse(R"({"kind":"continuous","support":[0,"inf"],"density_expr":"x*exp(-x/s)/s^2","params":{"s":2}})"));
  ASSERT_TRUE(g.mean());
  EXPECT_NEAR(*g.mean(), 4.0, 1e-9);
  auto ref = builtin("gamma", {{"shape", 2}, {"scale", 2}});
  for (double x : {0.5, 2.0, 7.0}) {
    EXPECT_NEAR(g.pdf(x), ref.pdf(x), 1e-12);
    EXPECT_NEAR(g.cdf(x), ref.cdf(x), 1e-10);
  }
  EXPECT_NEAR(g.quantile(0.5), ref.quantile(0.5), 1e-9);
  EXPECT_THROW(distribution_from_json(json::parse(R"({"support":[0,1],"density_expr":"3*x"})")), ConfigError);
  EXPECT_THROW(distribution_from_json(json::parse(R"({"support":[-1,1],"density_expr":"x"})")), ConfigError);
}

TEST(Config, FileLoading) {
  std::string path = ::testing::TempDir() + "covexp_law.json";
  {
    std::ofstream out(path);
    out << R"({"builtin":"poisson","params":{"lambda":2}})";
  }
  EXPECT_DOUBLE_EQ(load_distribution_config(path).pdf(0), std::exp(-2.0));
  {
    std::ofstream out(path);
    out << "{not json";
  }
  EXPECT_THROW(load_distribution_config(path), ConfigError);
  std::remove(path.c_str());
  EXPECT_THROW(load_distribution_config(path), ConfigError);
  EXPECT_EQ(parse_params("n=10, theta=0.3"), (Params{{"n", 10}, {"theta", 0.3}}));
  EXPECT_THROW(parse_params("n"), ConfigError);
}
