#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "covexp/expansion.hpp"
#include "covexp/report.hpp"
#include "covexp/oracle.hpp"
#include "covexp/weights.hpp"

namespace covexp {

struct CheckRow {
  std::string suite;
  std::string name;
  double value = 0.0;
  double reference = 0.0;
  double gap = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckRow> rows;

  int passed() const {
    int n = 0;
    for (const auto& r : rows) n += r.pass;
    return n;
  }
  bool pass() const { return !rows.empty() && passed() == static_cast<int>(rows.size()); }

  void add(std::string name, double value, double reference, double tolerance) {
    double gap = std::abs(value - reference);
    rows.push_back({suite, std::move(name), value, reference, gap, tolerance, gap <= tolerance});
  }
  void add_flag(std::string name, bool ok, double value = 0.0) {
    rows.push_back({suite, std::move(name), value, 0.0, 0.0, 0.0, ok});
  }
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"lagrange", "engines", "binomial-sandwich", "psd", "termination",
                                                 "twocopy"};
  return names;
}

namespace detail {

inline TestFunction poly(std::initializer_list<long> c) {
  std::vector<Rational> q;
  for (long v : c) q.emplace_back(v);
  return TestFunction(Polynomial(q));
}

inline TestFunction monomial(int d) {
  std::vector<Rational> c(static_cast<std::size_t>(d) + 1, Rational(0));
  c.back() = 1;
  return TestFunction(Polynomial(c));
}

inline std::vector<double> quantile_grid(const DistributionSpec& spec, int count = 11) {
  std::vector<double> g;
  for (int i = 1; i <= count; ++i) g.push_back(spec.quantile(static_cast<double>(i) / (count + 1)));
  return g;
}

inline std::string case_name(const std::string& a, int k, double x) {
  return a + " k=" + std::to_string(k) + " x=" + format_double(x);
}

}  // namespace detail

inline SuiteResult verify_lagrange(std::uint64_t seed, int count = 50) {
  SuiteResult s{"lagrange", {}};
  CounterRng rng(seed, 0x1a9);
  for (int i = 0; i < count; ++i) {
    LagrangeInstance inst = random_lagrange_instance(rng);
    DiscreteLaw<Rational> exact(inst.lo, inst.mass);
    auto re = lagrange_identity_check(exact, inst.v, inst.g, inst.u, inst.w, inst.ell);
    std::vector<double> md;
    for (const auto& m : inst.mass) md.push_back(to_double(m));
    DiscreteLaw<double> law(inst.lo, md);
    auto rd = lagrange_identity_check(law, inst.v, inst.g, inst.u, inst.w, inst.ell);
    bool ok = re.max_abs_gap == 0.0 && rd.max_abs_gap <= 1e-13 && re.remainder_min_eigenvalue >= -1e-13;
    s.add_flag("instance " + std::to_string(i + 1) + " support=" + std::to_string(inst.mass.size()) +
                   " r=" + std::to_string(inst.v.size()),
               ok, rd.max_abs_gap);
  }
  return s;
}

inline SuiteResult verify_engines() {
  SuiteResult s{"engines", {}};
  for (auto [name, params] : std::vector<std::pair<std::string, Params>>{
           {"normal", {}}, {"beta", {{"a", 2}, {"b", 3}}}, {"gamma", {{"shape", 3}, {"scale", 1}}}}) {
    auto spec = builtin(name, params);
    auto h = make_h(HTag::Id, spec);
    WeightEvaluator closed(spec, h, {}, 4, Engine::ClosedFormPearson);
    WeightEvaluator generic(spec, h, {}, 4, Engine::ContinuousGeneric);
    for (double x : detail::quantile_grid(spec)) {
      for (int k = 1; k <= 4; ++k) {
        s.add(detail::case_name(name + " pearson", k, x), generic.gamma(k, x), closed.gamma(k, x), 1e-7);
      }
    }
    auto hc = make_h(HTag::Cdf, spec);
    WeightEvaluator cdf(spec, hc, {}, 4, Engine::CdfFormula);
    WeightEvaluator cdf_generic(spec, hc, {}, 4, Engine::ContinuousGeneric);
    if (name != "gamma") {
      for (double x : detail::quantile_grid(spec)) {
        for (int k = 1; k <= 4; ++k) {
          double ref = cdf.gamma(k, x);
          s.add(detail::case_name(name + " cdf", k, x), cdf_generic.gamma(k, x), ref, 1e-7 * std::max(1.0, std::abs(ref)));
        }
      }
    }
  }
  for (auto [name, tag] : std::vector<std::pair<std::string, HTag>>{
           {"laplace", HTag::Id}, {"rayleigh", HTag::Square}, {"cauchy", HTag::Arctan}, {"levy", HTag::Cdf}}) {
    auto spec = builtin(name);
    auto h = make_h(tag, spec);
    WeightEvaluator cat(spec, h, {}, 4, Engine::SpecialCatalog);
    WeightEvaluator gen(spec, h, {}, 4, Engine::ContinuousGeneric);
    for (double x : detail::quantile_grid(spec, 7)) {
      for (int k = 1; k <= 4; ++k) {
        double ref = cat.gamma(k, x);
        s.add(detail::case_name(name + " catalog", k, x), gen.gamma(k, x), ref, 1e-6 * std::max(1.0, std::abs(ref)));
      }
    }
  }
  for (auto [name, params] : std::vector<std::pair<std::string, Params>>{
           {"binomial", {{"n", 10}, {"theta", 0.3}}}, {"poisson", {{"lambda", 2}}}, {"geometric", {{"theta", 0.5}}}}) {
    auto spec = builtin(name, params);
    auto h = make_h(HTag::Id, spec);
    // A deep truncation keeps the renormalization error far below the float tolerance on the bulk.
    WeightOptions wo;
    wo.eps_tail = 1e-30;
    for (int k = 1; k <= 3; ++k) {
      for (const auto& signs : all_discrete_signs(k)) {
        DiscreteWeights<Rational> ord(spec, h, signs, k, Engine::ClosedFormOrd, wo);
        DiscreteWeights<Rational> ident(spec, h, signs, k, Engine::DiscreteIdentity, wo);
        DiscreteWeights<Rational> nested(spec, h, signs, k, Engine::DiscreteNestedSum, wo);
        auto [lo, hi] = ord.window(k);
        hi = std::min(hi, static_cast<long>(spec.quantile(1.0 - 1e-6)));
        bool exact_ok = true, close_ok = true;
        double worst = 0.0;
        for (long x = lo; x <= hi; ++x) {
          Rational n = nested.gamma(k, x), i = ident.gamma(k, x), o = ord.gamma(k, x);
          exact_ok = exact_ok && n == i;
          double rel = std::abs(to_double(Rational(n - o))) / std::max(1.0, std::abs(to_double(o)));
          worst = std::max(worst, rel);
          if (spec.finite_support()) {
            exact_ok = exact_ok && n == o;
          } else {
            close_ok = close_ok && rel <= 1e-10;
          }
        }
        s.add_flag(name + " signs=" + signs.str(), exact_ok && close_ok, worst);
      }
    }
  }
  return s;
}

inline SuiteResult verify_binomial_sandwich(int n, double theta, const TestFunction& g) {
  SuiteResult s{"binomial-sandwich", {}};
  auto spec = builtin("binomial", {{"n", static_cast<double>(n)}, {"theta", theta}});
  if (g.is_exact()) {
    auto rep = binomial_natural_derivative<Rational>(n, theta, g);
    s.add_flag("natural derivative lower <= ratio", rep.lower <= rep.variance_ratio, to_double(rep.lower));
    s.add_flag("natural derivative ratio <= upper", rep.variance_ratio <= rep.upper, to_double(rep.upper));
    s.add("pointwise square identity", rep.max_identity_gap, 0.0, 1e-14);
  } else {
    auto rep = binomial_natural_derivative<double>(n, theta, g);
    s.add_flag("natural derivative two-sided", rep.two_sided, rep.variance_ratio);
    s.add("pointwise square identity", rep.max_identity_gap, 0.0, 1e-14 * std::max(1.0, rep.upper));
  }
  for (const auto& signs : all_discrete_signs(2)) {
    if (max_feasible_order(spec, signs) < 2) continue;
    auto sw = sandwich(spec, g, make_h(HTag::Id, spec), signs);
    s.add_flag("sandwich signs=" + signs.str(), sw.holds, sw.variance);
  }
  return s;
}

inline SuiteResult verify_psd() {
  SuiteResult s{"psd", {}};
  std::vector<TestFunction> fvec = {detail::monomial(1), detail::monomial(2)};
  for (auto [name, params] : std::vector<std::pair<std::string, Params>>{
           {"normal", {}}, {"binomial", {{"n", 10}, {"theta", 0.3}}}}) {
    auto spec = builtin(name, params);
    auto h = make_h(HTag::Id, spec);
    for (int n = 1; n <= 2; ++n) {
      auto rep = expand_matrix(spec, fvec, h, {}, n);
      const auto& v = rep.verdicts.back();
      s.add_flag(name + " n=" + std::to_string(n) + " min eigenvalue", v.min_eigenvalue >= -1e-9, v.min_eigenvalue);
    }
  }
  return s;
}

inline SuiteResult verify_termination() {
  SuiteResult s{"termination", {}};
  for (auto [name, params] : std::vector<std::pair<std::string, Params>>{
           {"normal", {}}, {"beta", {{"a", 2}, {"b", 3}}}, {"binomial", {{"n", 10}, {"theta", 0.3}}}}) {
    auto spec = builtin(name, params);
    auto h = make_h(HTag::Id, spec);
    for (int d = 1; d <= 4; ++d) {
      auto f = detail::monomial(d);
      auto rep = expand(spec, f, f, h, {}, d);
      if (rep.exact) {
        s.add_flag(name + " degree " + std::to_string(d) + " exact zero remainder",
                   rep.exact_remainders.back()[0][0] == 0, rep.remainder(d));
      } else {
        s.add(name + " degree " + std::to_string(d), rep.remainder(d), 0.0, 1e-10);
      }
    }
  }
  return s;
}

inline SuiteResult verify_twocopy(long samples, std::uint64_t seed) {
  SuiteResult s{"twocopy", {}};
  struct Case {
    std::string law;
    Params params;
    TestFunction f, g;
    std::string label;
  };
  auto gauss_bump = TestFunction::callable("exp(-x^2)", [](double x) { return std::exp(-x * x); });
  std::vector<Case> cases = {
      {"normal", {}, detail::monomial(1), detail::monomial(1), "x,x"},
      {"normal", {}, detail::monomial(2), detail::monomial(2), "x^2,x^2"},
      {"normal", {}, gauss_bump, detail::monomial(2), "exp(-x^2),x^2"},
      {"beta", {{"a", 2}, {"b", 3}}, detail::monomial(1), detail::monomial(2), "x,x^2"},
      {"gamma", {{"shape", 3}, {"scale", 1}}, detail::monomial(1), detail::monomial(2), "x,x^2"},
      {"binomial", {{"n", 10}, {"theta", 0.3}}, detail::monomial(1), detail::monomial(2), "x,x^2"},
  };
  TwoCopyOptions opts;
  opts.force_mc = true;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    auto spec = builtin(c.law, c.params);
    double truth = covariance_exact(spec, c.f, c.g).scalar();
    auto mc = covariance_mc_twocopy(spec, c.f, c.g, samples, seed + i, opts);
    s.add(c.law + " " + c.label + " indicator", mc.indicator.scalar(), truth, 3.0 * *mc.indicator.std_error);
    s.add(c.law + " " + c.label + " symmetric", mc.symmetric.scalar(), truth, 3.0 * *mc.symmetric.std_error);
    s.add(c.law + " " + c.label + " forms agree", mc.indicator.scalar(), mc.symmetric.scalar(),
          3.0 * mc.difference_std_error);
  }
  return s;
}

}  // namespace covexp
