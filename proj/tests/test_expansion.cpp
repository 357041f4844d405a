#include <gtest/gtest.h>

#include <cmath>

#include "covexp/expansion.hpp"

using namespace covexp;

namespace {

TestFunction poly(std::initializer_list<long> c) {
  std::vector<Rational> q;
  for (long v : c) q.emplace_back(v);
  return TestFunction(Polynomial(q));
}

TestFunction monomial(int d) {
  std::vector<Rational> c(static_cast<std::size_t>(d) + 1, Rational(0));
  c.back() = 1;
  return TestFunction(Polynomial(c));
}

DistributionSpec binomial10() { return builtin("binomial", {{"n", 10}, {"theta", 0.3}}); }

// Binomial(n, theta) masses from the textbook formula, independent of the library's pmf.
std::vector<Rational> binomial_masses(int n, const Rational& theta) {
  std::vector<Rational> p;
  Rational c = 1;
  for (int x = 0; x <= n; ++x) {
    Rational v = c;
    for (int i = 0; i < x; ++i) v *= theta;
    for (int i = 0; i < n - x; ++i) v *= 1 - theta;
    p.push_back(v);
    c = c * (n - x) / (x + 1);
  }
  return p;
}

Rational var_exact(const std::vector<Rational>& p, const std::function<Rational(long)>& g) {
  Rational m = 0, m2 = 0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    Rational v = g(static_cast<long>(x));
    m += p[x] * v;
    m2 += p[x] * v * v;
  }
  return m2 - m * m;
}

}  // namespace

TEST(Expand, NormalSquare) {
  auto n = builtin("normal");
  auto rep = expand(n, monomial(2), monomial(2), make_h(HTag::Id, n), {}, 2);
  EXPECT_NEAR(rep.term(1), 4.0, 1e-12);
  EXPECT_NEAR(rep.term(2), -2.0, 1e-12);
  EXPECT_NEAR(rep.partial_sum(2), 2.0, 1e-12);
  EXPECT_NEAR(rep.truth(0, 0), 2.0, 1e-12);
  EXPECT_LE(std::abs(rep.remainder(2)), 1e-10);
  EXPECT_NEAR(rep.remainder(1), 2.0, 1e-12);
  EXPECT_TRUE(rep.symmetric);
  EXPECT_TRUE(rep.verdicts[0].bound_holds && rep.verdicts[1].bound_holds);
}

TEST(Expand, NormalLinearTerminates) {
  auto n = builtin("normal");
  auto rep = expand(n, monomial(1), monomial(1), make_h(HTag::Id, n), {}, 1);
  EXPECT_NEAR(rep.partial_sum(1), 1.0, 1e-12);
  EXPECT_LE(std::abs(rep.remainder(1)), 1e-12);
}

TEST(Expand, NormalCubeEnvelope) {
  auto n = builtin("normal");
  auto rep = expand(n, monomial(3), monomial(3), make_h(HTag::Id, n), {}, 3);
  // E[9X^4] = 27, E[(6X)^2]/2 = 18, E[6^2]/6 = 6; Var[X^3] = 15.
  EXPECT_NEAR(rep.partial_sum(1), 27.0, 1e-10);
  EXPECT_NEAR(rep.partial_sum(2), 9.0, 1e-10);
  EXPECT_NEAR(rep.partial_sum(3), 15.0, 1e-10);
  EXPECT_NEAR(rep.truth(0, 0), 15.0, 1e-10);
}

TEST(Expand, BinomialSquareExact) {
  auto bin = binomial10();
  auto rep = expand(bin, monomial(2), monomial(2), make_h(HTag::Id, bin), SignSequence::parse("--"), 2);
  ASSERT_TRUE(rep.exact);
  auto p = binomial_masses(10, Rational(3, 10));
  Rational var = var_exact(p, [](long x) { return Rational(x * x); });
  EXPECT_EQ(rep.exact_truth[0][0], var);
  EXPECT_EQ(rep.exact_partial_sums[1][0][0], var);
  EXPECT_EQ(rep.exact_remainders[1][0][0], Rational(0));
}

TEST(Expand, BinomialCubeFromClosedWeights) {
  // T1 = E[(D+g)^2 theta(n-X)], T2 = -E[(D+D+g)^2 theta^2 (n-X)(n-X-1)/2].
  auto bin = binomial10();
  auto rep = expand(bin, monomial(3), monomial(3), make_h(HTag::Id, bin), SignSequence::parse("--"), 2);
  ASSERT_TRUE(rep.exact);
  const Rational th(3, 10);
  auto p = binomial_masses(10, th);
  auto g = [](long x) { return Rational(x * x * x); };
  Rational t1 = 0, t2 = 0;
  for (long x = 0; x <= 10; ++x) {
    Rational d1 = g(x + 1) - g(x);
    Rational d2 = g(x + 2) - 2 * g(x + 1) + g(x);
    t1 += p[static_cast<std::size_t>(x)] * d1 * d1 * th * (10 - x);
    t2 -= p[static_cast<std::size_t>(x)] * d2 * d2 * th * th * (10 - x) * (9 - x) / 2;
  }
  EXPECT_EQ(rep.exact_terms[0][0][0], t1);
  EXPECT_EQ(rep.exact_terms[1][0][0], t2);
  Rational var = var_exact(p, g);
  EXPECT_EQ(rep.exact_truth[0][0], var);
  EXPECT_GE(t1, var);
  EXPECT_LE(t1 + t2, var);
}

TEST(Expand, MatrixNormal) {
  auto n = builtin("normal");
  auto rep = expand_matrix(n, {monomial(1), monomial(2)}, make_h(HTag::Id, n), {}, 1);
  Matrix cov(2, 2), s1(2, 2), r1(2, 2);
  cov << 1, 0, 0, 2;
  s1 << 1, 0, 0, 4;
  r1 << 0, 0, 0, 2;
  EXPECT_LE((rep.truth - cov).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((rep.partial_sums[0] - s1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((rep.remainders[0] - r1).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(rep.verdicts[0].psd);
}

TEST(Expand, MatrixBinomialTerminates) {
  auto bin = binomial10();
  auto rep = expand_matrix(bin, {monomial(1), monomial(2)}, make_h(HTag::Id, bin), SignSequence::parse("--"), 2);
  EXPECT_LE(rep.remainders[1].cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_TRUE(rep.exact);
  for (const auto& row : rep.exact_remainders[1]) {
    for (const auto& v : row) EXPECT_EQ(v, Rational(0));
  }
}

TEST(Expand, DuplicatedComponentsAreRankOne) {
  auto n = builtin("normal");
  auto f = poly({0, 1, 0, 1});
  auto rep = expand_matrix(n, {f, f}, make_h(HTag::Id, n), {}, 1);
  const Matrix& r = rep.remainders[0];
  EXPECT_NEAR(r(0, 0), r(0, 1), 1e-10);
  EXPECT_NEAR(r(1, 1), r(0, 1), 1e-10);
  EXPECT_GE(rep.verdicts[0].min_eigenvalue, -1e-9);
}

TEST(Expand, AlternatingBoundsForGeneralH) {
  // Odd truncations bound the variance from above and even ones from below, whatever h is.
  auto n = builtin("normal");
  auto rep_atan = expand(n, monomial(2), monomial(2), make_h(HTag::Arctan, n), {}, 2);
  EXPECT_GE(rep_atan.partial_sum(1), 2.0 - 1e-8);
  EXPECT_LE(rep_atan.partial_sum(2), 2.0 + 1e-8);
  EXPECT_TRUE(rep_atan.verdicts[0].bound_holds && rep_atan.verdicts[1].bound_holds);
  // With h the law's cdf, f_1 = f'/p grows fast, so only light test functions keep T_1 finite.
  auto at = arctan_function();
  auto rep_cdf = expand(n, at, at, make_h(HTag::Cdf, n), {}, 1);
  EXPECT_GE(rep_cdf.partial_sum(1), rep_cdf.truth(0, 0) - 1e-8);
  EXPECT_TRUE(rep_cdf.verdicts[0].bound_holds);
  EXPECT_THROW(expand(n, monomial(2), monomial(2), make_h(HTag::Cdf, n), {}, 1), ConvergenceError);
  auto bin = binomial10();
  auto rep = expand(bin, monomial(3), monomial(3), make_h(HTag::Square, bin), SignSequence::parse("--"), 2);
  ASSERT_TRUE(rep.exact);
  EXPECT_EQ(rep.engine, Engine::DiscreteNestedSum);
  EXPECT_GE(rep.exact_partial_sums[0][0][0], rep.exact_truth[0][0]);
  EXPECT_LE(rep.exact_partial_sums[1][0][0], rep.exact_truth[0][0]);
}

TEST(Expand, RandomPolynomialsTerminateAndAlternate) {
  CounterRng rng(9, 2);
  auto bin = binomial10();
  auto n = builtin("normal");
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Rational> c;
    for (int i = 0; i < 4; ++i) c.emplace_back(static_cast<long>(rng.next() % 7) - 3);
    c.emplace_back(1);
    TestFunction g{Polynomial(c)};
    auto re = expand(bin, g, g, make_h(HTag::Id, bin), SignSequence::parse("-+-+"), 4);
    ASSERT_TRUE(re.exact);
    EXPECT_EQ(re.exact_remainders[3][0][0], Rational(0));
    for (int k = 1; k <= 4; ++k) EXPECT_GE(re.exact_remainders[static_cast<std::size_t>(k - 1)][0][0], Rational(0));
    auto rc = expand(n, g, g, make_h(HTag::Id, n), {}, 4);
    EXPECT_LE(std::abs(rc.remainder(4)), 1e-8 * std::max(1.0, rc.truth(0, 0)));
    for (const auto& v : rc.verdicts) EXPECT_TRUE(v.bound_holds);
  }
}

TEST(Expand, InfeasibleOrderReportsMaximum) {
  auto bin = builtin("binomial", {{"n", 3}, {"theta", 0.3}});
  try {
    expand(bin, monomial(2), monomial(2), make_h(HTag::Id, bin), SignSequence::parse("------"), 6);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("maximal feasible order is 3"), std::string::npos) << e.what();
  }
  EXPECT_EQ(max_feasible_order(bin, SignSequence::parse("+-+-+")), 3);
  EXPECT_THROW(expand(builtin("normal"), monomial(1), monomial(1), make_h(HTag::Id, bin), SignSequence::parse("-"), 1),
               InvalidArgument);
}

TEST(Expand, CauchyCovarianceUndefined) {
  auto c = builtin("cauchy");
  EXPECT_THROW(expand(c, monomial(1), monomial(1), make_h(HTag::Arctan, c), {}, 1), ConvergenceError);
}

TEST(Sandwich, NormalValues) {
  auto n = builtin("normal");
  auto s = sandwich(n, monomial(3), make_h(HTag::Id, n), {});
  EXPECT_NEAR(s.upper, 27.0, 1e-10);
  EXPECT_NEAR(s.variance, 15.0, 1e-10);
  EXPECT_NEAR(s.lower, 9.0, 1e-10);
  EXPECT_TRUE(s.holds);
  auto lin = sandwich(n, monomial(1), make_h(HTag::Id, n), {});
  EXPECT_NEAR(lin.lower, 1.0, 1e-12);
  EXPECT_NEAR(lin.variance, 1.0, 1e-12);
  EXPECT_NEAR(lin.upper, 1.0, 1e-12);
}

TEST(Sandwich, BinomialAllSigns) {
  auto bin = binomial10();
  for (const auto& s : all_discrete_signs(2)) {
    auto r = sandwich(bin, monomial(3), make_h(HTag::Id, bin), s);
    ASSERT_TRUE(r.exact);
    EXPECT_TRUE(r.holds) << s.str();
    EXPECT_LE(r.exact_lower, r.exact_variance);
    EXPECT_LE(r.exact_variance, r.exact_upper);
  }
}

TEST(NaturalDerivative, CubeValues) {
  auto rep = binomial_natural_derivative<Rational>(10, 0.3, monomial(3));
  const Rational th(3, 10);
  auto p = binomial_masses(10, th);
  auto g = [](long x) { return Rational(x * x * x); };
  Rational upper = 0, corr = 0;
  bool identity = true;
  for (long x = 0; x <= 10; ++x) {
    Rational dp = g(x + 1) - g(x), dm = g(x) - g(x - 1), dpm = g(x + 1) - 2 * g(x) + g(x - 1);
    Rational nab = Rational(x, 10) * dm + Rational(10 - x, 10) * dp;
    upper += p[static_cast<std::size_t>(x)] * nab * nab;
    corr += p[static_cast<std::size_t>(x)] * Rational(x * (10 - x), 100) * dpm * dpm;
    Rational mix = Rational(x, 10) * dm * dm + Rational(10 - x, 10) * dp * dp - Rational(x * (10 - x), 100) * dpm * dpm;
    identity = identity && mix == nab * nab;
  }
  EXPECT_TRUE(identity);
  Rational ratio = var_exact(p, g) / (10 * th * (1 - th));
  EXPECT_EQ(rep.upper, upper);
  EXPECT_EQ(rep.lower, upper - 4 * corr);
  EXPECT_EQ(rep.variance_ratio, ratio);
  EXPECT_EQ(rep.max_identity_gap, 0.0);
  EXPECT_TRUE(rep.two_sided);
  EXPECT_NEAR(to_double(rep.lower), 1735.7608, 1e-9);
  EXPECT_NEAR(to_double(rep.variance_ratio), 1754.812, 1e-9);
  EXPECT_NEAR(to_double(rep.upper), 2096.10064, 1e-9);
}

TEST(NaturalDerivative, LinearAndTwoPoint) {
  auto lin = binomial_natural_derivative<Rational>(7, 0.4, monomial(1));
  for (const auto& v : lin.nabla) EXPECT_EQ(v, Rational(1));
  EXPECT_EQ(lin.variance_ratio, Rational(1));
  EXPECT_EQ(lin.upper, Rational(1));
  auto two = binomial_natural_derivative<Rational>(2, 0.3, monomial(3));
  EXPECT_EQ(two.lower, two.upper);
  auto fl = binomial_natural_derivative<double>(10, 0.3, monomial(2));
  EXPECT_LE(fl.variance_ratio, fl.upper);
  EXPECT_LE(fl.max_identity_gap, 1e-12);
  EXPECT_THROW(binomial_natural_derivative<double>(10, 1.3, monomial(2)), InvalidArgument);
}

TEST(RemainderMc, NormalCases) {
  auto n = builtin("normal");
  auto id = make_h(HTag::Id, n);
  auto zero = remainder_mc(n, monomial(2), monomial(2), id, {}, 2, 200000, 7);
  EXPECT_LE(std::abs(zero.estimate), 3 * zero.std_error + 1e-12);
  auto r1 = remainder_mc(n, monomial(3), monomial(3), id, {}, 1, 400000, 7);
  EXPECT_NEAR(r1.estimate, 12.0, 3 * r1.std_error);
  EXPECT_GT(r1.std_error, 0.0);
}

TEST(RemainderMc, EnumerationMatchesSubtraction) {
  auto coin = tabulated_pmf(0, {Rational(1, 2), Rational(1, 2)});
  auto h = make_h(HTag::Id, coin);
  auto rc = remainder_mc(coin, monomial(2), monomial(2), h, SignSequence::parse("-"), 1, 1000, 7);
  EXPECT_TRUE(rc.enumerated);
  EXPECT_EQ(rc.estimate, 0.0);

  auto bin = builtin("binomial", {{"n", 3}, {"theta", 0.5}});
  for (const char* s : {"-", "+"}) {
    auto sub = expand(bin, monomial(3), monomial(3), make_h(HTag::Id, bin), SignSequence::parse(s), 1);
    auto dir = remainder_mc(bin, monomial(3), monomial(3), make_h(HTag::Id, bin), SignSequence::parse(s), 1, 1000, 7);
    EXPECT_TRUE(dir.enumerated);
    EXPECT_NEAR(dir.estimate, sub.remainder(1), 1e-10) << s;
  }
  for (const char* s : {"--", "+-", "-+"}) {
    auto sub = expand(bin, monomial(3), monomial(3), make_h(HTag::Id, bin), SignSequence::parse(s), 2);
    auto dir = remainder_mc(bin, monomial(3), monomial(3), make_h(HTag::Id, bin), SignSequence::parse(s), 2, 1000, 7);
    EXPECT_TRUE(dir.enumerated);
    EXPECT_NEAR(dir.estimate, sub.remainder(2), 1e-10) << s;
  }
}

TEST(RemainderMc, ReproducibleAcrossThreadCounts) {
  auto n = builtin("normal");
  RemainderOptions one, four;
  one.threads = 1;
  four.threads = 4;
  auto a = remainder_mc(n, monomial(3), monomial(3), make_h(HTag::Id, n), {}, 1, 50000, 11, one);
  auto b = remainder_mc(n, monomial(3), monomial(3), make_h(HTag::Id, n), {}, 1, 50000, 11, four);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_THROW(remainder_mc(n, monomial(3), monomial(3), make_h(HTag::Id, n), {}, 3, 100, 1), InvalidArgument);
}
