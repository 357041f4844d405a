#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "covexp/calculus.hpp"
#include "covexp/distributions.hpp"
#include "covexp/errors.hpp"
#include "covexp/oracle.hpp"
#include "covexp/parallel.hpp"
#include "covexp/rng.hpp"
#include "covexp/weights.hpp"

namespace covexp {

struct ExpansionOptions {
  Engine engine = Engine::Auto;
  WeightOptions weights;
  QuadratureOptions outer = kOracleQuadrature;
  double tau_bound = 1e-8;
  double tau_psd = 1e-9;
  unsigned threads = 0;  // 0: default_threads()
  bool exact = true;     // rational arithmetic on discrete laws when every input allows it
};

enum class RemainderPath { Subtraction, Direct };

struct ExpansionVerdict {
  int n = 0;
  bool bound_holds = false;  // upper bound for odd n, lower bound for even n
  bool psd = false;
  double min_eigenvalue = 0.0;
};

struct ExpansionReport {
  std::string law;
  std::string h_name;
  SignSequence signs;
  Engine engine = Engine::Auto;
  int order = 0;
  bool symmetric = false;  // f == g componentwise, so bounds and PSD verdicts apply
  std::vector<Matrix> terms, partial_sums, remainders;  // remainders[k-1] = (-1)^k (truth - S_k)
  Matrix truth;
  OracleMethod truth_method = OracleMethod::ExactQuadrature;
  std::vector<ExpansionVerdict> verdicts;
  RemainderPath remainder_path = RemainderPath::Subtraction;
  double tau_bound = 0.0;

  bool exact = false;
  std::vector<RationalMatrix> exact_terms, exact_partial_sums, exact_remainders;
  RationalMatrix exact_truth;

  double term(int k) const { return terms.at(static_cast<std::size_t>(k - 1))(0, 0); }
  double partial_sum(int k) const { return partial_sums.at(static_cast<std::size_t>(k - 1))(0, 0); }
  double remainder(int k) const { return remainders.at(static_cast<std::size_t>(k - 1))(0, 0); }
};

inline SignSequence default_signs(const DistributionSpec& spec, int n) {
  return spec.is_discrete() ? SignSequence::all_minus(n) : SignSequence::continuous(n);
}

/// Largest k <= signs.size() whose window [lo + a_k, hi - b_k] is nonempty.
inline int max_feasible_order(const DistributionSpec& spec, const SignSequence& signs, double eps_tail = kDefaultTail) {
  if (!spec.is_discrete()) return signs.size();
  auto [lo, hi] = discrete_window(spec, eps_tail);
  int best = 0;
  for (int k = 1; k <= signs.size(); ++k) {
    if (lo + signs.plus_count(k) <= hi - signs.minus_count(k)) best = k;
  }
  return best;
}

namespace detail {

inline bool same_functions(const std::vector<TestFunction>& a, const std::vector<TestFunction>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].same_node(b[i])) return false;
  }
  return true;
}

inline std::vector<TestFunction> iterate_all(const std::vector<TestFunction>& fs, const HChoice& h,
                                             const SignSequence& signs, int k) {
  std::vector<TestFunction> out;
  for (const auto& f : fs) out.push_back(iterate_f(f, h.h, signs, k, h.h1));
  return out;
}

template <class T>
std::vector<std::vector<T>> discrete_term(const DiscreteWeights<T>& w, const std::vector<TestFunction>& fs,
                                          const std::vector<TestFunction>& gs, int k) {
  const auto& law = w.law();
  const int ell = w.signs().at(k);
  auto f1 = iterate_all(fs, w.h(), w.signs(), k - 1);
  auto g1 = iterate_all(gs, w.h(), w.signs(), k - 1);
  std::vector<std::vector<T>> out(fs.size(), std::vector<T>(gs.size(), T(0)));
  auto [a, b] = w.window(k);
  for (long x = std::max(a, law.lo()); x <= std::min(b, law.hi()); ++x) {
    T wx = w.gamma(k, x);
    if (wx == T(0)) continue;
    wx *= law.p(x);
    T dh = w.dh(k, x);
    if (!(to_double(dh) >= kPositivityFloor)) throw DomainError("Delta h is not positive at x = " + std::to_string(x));
    wx /= dh;
    std::vector<T> df(f1.size()), dg(g1.size());
    for (std::size_t i = 0; i < f1.size(); ++i) df[i] = delta(f1[i], -ell, T(x));
    for (std::size_t j = 0; j < g1.size(); ++j) dg[j] = delta(g1[j], -ell, T(x));
    for (std::size_t i = 0; i < df.size(); ++i) {
      for (std::size_t j = 0; j < dg.size(); ++j) out[i][j] += df[i] * dg[j] * wx;
    }
  }
  if (k % 2 == 0) {
    for (auto& row : out) {
      for (auto& v : row) v = -v;
    }
  }
  return out;
}

inline Matrix continuous_term(const WeightEvaluator& ev, const std::vector<TestFunction>& fs,
                              const std::vector<TestFunction>& gs, int k, const QuadratureOptions& opts) {
  const DistributionSpec& spec = ev.spec();
  auto f1 = iterate_all(fs, ev.h(), ev.signs(), k - 1);
  auto g1 = iterate_all(gs, ev.h(), ev.signs(), k - 1);
  const std::size_t r = f1.size(), s = g1.size();
  auto integrand = [&](double t) {
    std::vector<double> v(r * s, 0.0);
    double p = spec.pdf(t);
    if (p < std::numeric_limits<double>::min()) return v;
    double w = ev.weighted(k, t);
    if (w == 0.0) return v;
    // p * dh underflows in Gaussian tails long before either factor does.
    w = w / ev.dh(k, t) / p;
    for (std::size_t i = 0; i < r; ++i) {
      double df = delta(f1[i], 0, t);
      for (std::size_t j = 0; j < s; ++j) v[i * s + j] = df * delta(g1[j], 0, t) * w;
    }
    return v;
  };
  std::vector<double> total(r * s, 0.0);
  try {
    double m = spec.median();
    auto a = integrate_against(spec, integrand, r * s, spec.lower(), m, opts);
    auto b = integrate_against(spec, integrand, r * s, m, spec.upper(), opts);
    for (std::size_t c = 0; c < r * s; ++c) total[c] = a[c] + b[c];
  } catch (const ConvergenceError& e) {
    throw ConvergenceError("expansion term " + std::to_string(k) + " is not finite: " + e.what());
  }
  Matrix out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s));
  const double sign = (k % 2) ? 1.0 : -1.0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      double v = total[i * s + j];
      if (!std::isfinite(v)) throw ConvergenceError("expansion term " + std::to_string(k) + " is not finite");
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sign * v;
    }
  }
  return out;
}

template <class T>
void discrete_terms_all(const DiscreteWeights<T>& w, const std::vector<TestFunction>& fs,
                        const std::vector<TestFunction>& gs, int n, unsigned threads,
                        std::vector<std::vector<std::vector<T>>>& out) {
  out.assign(static_cast<std::size_t>(n), {});
  parallel_for(
      static_cast<std::size_t>(n),
      [&](std::size_t i) { out[i] = discrete_term(w, fs, gs, static_cast<int>(i) + 1); }, threads);
}

}  // namespace detail

/// Cross expansion of Cov[f_i(X), g_j(X)] to order n; matrix valued when r or s exceed 1.
inline ExpansionReport expand_cross(const DistributionSpec& spec, const std::vector<TestFunction>& fs,
                                    const std::vector<TestFunction>& gs, const HChoice& h, SignSequence signs, int n,
                                    const ExpansionOptions& opts = {}) {
  if (n < 1) throw InvalidArgument("expansion order must be at least 1");
  if (fs.empty() || gs.empty()) throw InvalidArgument("expansion needs test functions");
  if (signs.empty()) signs = default_signs(spec, n);
  signs = signs.for_order(n);
  if (spec.is_discrete()) {
    int feasible = max_feasible_order(spec, signs, opts.weights.eps_tail);
    if (feasible < n) {
      throw DomainError("order " + std::to_string(n) + " leaves an empty window for signs '" + signs.str() +
                        "'; the maximal feasible order is " + std::to_string(feasible));
    }
  }
  const unsigned threads = opts.threads ? opts.threads : default_threads();
  ExpansionReport rep;
  rep.law = spec.name();
  rep.h_name = h.h1 ? h.h1->name() + " then " + h.h.name() : h.h.name();
  rep.signs = signs.prefix(n);
  rep.order = n;
  rep.symmetric = detail::same_functions(fs, gs);

  OracleResult truth = covariance_matrix_exact(spec, fs, gs, opts.outer, opts.weights.eps_tail);
  rep.truth = truth.value;
  rep.truth_method = truth.method;

  bool exact = spec.is_discrete() && opts.exact && spec.has_exact_pmf() && all_exact(fs) && all_exact(gs) &&
               h.h.is_exact() && (!h.h1 || h.h1->is_exact()) && truth.exact.has_value();
  if (spec.is_discrete()) {
    if (exact) {
      DiscreteWeights<Rational> w(spec, h, signs, n, opts.engine, opts.weights);
      rep.engine = w.engine();
      std::vector<RationalMatrix> terms;
      detail::discrete_terms_all(w, fs, gs, n, threads, terms);
      rep.exact = true;
      rep.exact_truth = *truth.exact;
      RationalMatrix sum(fs.size(), std::vector<Rational>(gs.size(), Rational(0)));
      for (int k = 1; k <= n; ++k) {
        const auto& t = terms[static_cast<std::size_t>(k - 1)];
        RationalMatrix rem = sum;
        for (std::size_t i = 0; i < fs.size(); ++i) {
          for (std::size_t j = 0; j < gs.size(); ++j) {
            sum[i][j] += t[i][j];
            Rational d = rep.exact_truth[i][j] - sum[i][j];
            rem[i][j] = (k % 2) ? Rational(-d) : d;
          }
        }
        rep.exact_terms.push_back(t);
        rep.exact_partial_sums.push_back(sum);
        rep.exact_remainders.push_back(rem);
        rep.terms.push_back(to_matrix(t));
        rep.partial_sums.push_back(to_matrix(sum));
        rep.remainders.push_back(to_matrix(rem));
      }
    } else {
      DiscreteWeights<double> w(spec, h, signs, n, opts.engine, opts.weights);
      rep.engine = w.engine();
      std::vector<std::vector<std::vector<double>>> terms;
      detail::discrete_terms_all(w, fs, gs, n, threads, terms);
      for (auto& t : terms) {
        Matrix m(static_cast<Eigen::Index>(fs.size()), static_cast<Eigen::Index>(gs.size()));
        for (std::size_t i = 0; i < fs.size(); ++i) {
          for (std::size_t j = 0; j < gs.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t[i][j];
        }
        rep.terms.push_back(m);
      }
    }
  } else {
    WeightEvaluator ev(spec, h, signs, n, opts.engine, opts.weights);
    rep.engine = ev.engine();
    rep.terms.assign(static_cast<std::size_t>(n), Matrix());
    parallel_for(
        static_cast<std::size_t>(n),
        [&](std::size_t i) { rep.terms[i] = detail::continuous_term(ev, fs, gs, static_cast<int>(i) + 1, opts.outer); },
        threads);
  }
  if (!rep.exact) {
    Matrix sum = Matrix::Zero(rep.truth.rows(), rep.truth.cols());
    for (int k = 1; k <= n; ++k) {
      sum += rep.terms[static_cast<std::size_t>(k - 1)];
      rep.partial_sums.push_back(sum);
      Matrix d = rep.truth - sum;
      rep.remainders.push_back((k % 2) ? Matrix(-d) : d);
    }
  }
  rep.tau_bound = rep.exact ? 0.0 : opts.tau_bound;
  for (int k = 1; k <= n; ++k) {
    ExpansionVerdict v;
    v.n = k;
    const Matrix& rem = rep.remainders[static_cast<std::size_t>(k - 1)];
    if (rem.rows() == rem.cols()) {
      v.min_eigenvalue = rep.symmetric ? min_eigenvalue(rem) : rem.minCoeff();
    } else {
      v.min_eigenvalue = rem.minCoeff();
    }
    v.psd = v.min_eigenvalue >= -opts.tau_psd;
    if (rep.exact && rem.size() == 1) {
      v.bound_holds = rep.exact_remainders[static_cast<std::size_t>(k - 1)][0][0] >= 0;
    } else {
      v.bound_holds = v.min_eigenvalue >= -rep.tau_bound;
    }
    rep.verdicts.push_back(v);
  }
  return rep;
}

inline ExpansionReport expand(const DistributionSpec& spec, const TestFunction& f, const TestFunction& g,
                              const HChoice& h, const SignSequence& signs, int n, const ExpansionOptions& opts = {}) {
  return expand_cross(spec, {f}, {g}, h, signs, n, opts);
}

inline ExpansionReport expand_matrix(const DistributionSpec& spec, const std::vector<TestFunction>& fvec,
                                     const HChoice& h, const SignSequence& signs, int n,
                                     const ExpansionOptions& opts = {}) {
  if (fvec.empty() || fvec.size() > 3) throw InvalidArgument("matrix mode takes 1 to 3 components");
  return expand_cross(spec, fvec, fvec, h, signs, n, opts);
}

// ---------------------------------------------------------------------------
// Two-sided bounds

struct SandwichResult {
  double lower = 0.0, variance = 0.0, upper = 0.0;
  bool holds = false;
  bool exact = false;
  Rational exact_lower, exact_variance, exact_upper;
};

inline SandwichResult sandwich(const DistributionSpec& spec, const TestFunction& g, const HChoice& h,
                               const SignSequence& signs, const ExpansionOptions& opts = {}) {
  ExpansionReport rep = expand(spec, g, g, h, signs, 2, opts);
  SandwichResult s;
  s.upper = rep.partial_sum(1);
  s.lower = rep.partial_sum(2);
  s.variance = rep.truth(0, 0);
  s.exact = rep.exact;
  if (rep.exact) {
    s.exact_upper = rep.exact_partial_sums[0][0][0];
    s.exact_lower = rep.exact_partial_sums[1][0][0];
    s.exact_variance = rep.exact_truth[0][0];
    s.holds = s.exact_lower <= s.exact_variance && s.exact_variance <= s.exact_upper;
  } else {
    s.holds = s.lower <= s.variance + rep.tau_bound && s.variance <= s.upper + rep.tau_bound;
  }
  return s;
}

/// The binomial natural derivative nabla_n g(x) = (x/n) Delta^- g(x) + ((n-x)/n) Delta^+ g(x) and
/// the two-sided bound around Var[g(X)] / (n theta (1 - theta)).
template <class T>
struct NaturalDerivativeReport {
  std::vector<T> nabla;          // nabla_n g(x), x = 0..n
  std::vector<T> identity_lhs;   // (nabla_n g)^2
  std::vector<T> identity_rhs;   // mixture of squared differences
  double max_identity_gap = 0.0;
  T upper{0};           // E[(nabla_n g)^2]
  T lower{0};           // upper - ((n-2)/2) E[(X(n-X)/n^2)(Delta^{+-} g)^2]
  T variance{0};        // Var[g(X)]
  T variance_ratio{0};  // Var[g(X)] / (n theta (1 - theta))
  bool two_sided = false;
};

template <class T>
NaturalDerivativeReport<T> binomial_natural_derivative(int n, double theta, const TestFunction& g) {
  if (!(theta > 0.0 && theta < 1.0)) throw InvalidArgument("theta must lie in (0, 1)");
  if (n < 1) throw InvalidArgument("binomial size must be at least 1");
  if constexpr (std::is_same_v<T, Rational>) {
    if (!g.is_exact()) throw InvalidArgument("exact natural derivative needs an exact g");
  }
  auto spec = builtin("binomial", {{"n", static_cast<double>(n)}, {"theta", theta}});
  auto law = make_discrete_law<T>(spec);
  NaturalDerivativeReport<T> rep;
  const T nn(n);
  T e_sq(0), e_mix(0);
  T mean(0), second(0);
  for (long x = 0; x <= n; ++x) {
    const T xv(x);
    const T gx = g.eval(xv);
    // Terms whose coefficient vanishes at the ends are skipped, so g is only read on {0..n}.
    T dm = x > 0 ? T(gx - g.eval(T(x - 1))) : T(0);
    T dp = x < n ? T(g.eval(T(x + 1)) - gx) : T(0);
    T alpha = xv / nn;
    T beta = T(nn - xv) / nn;
    T nab = alpha * dm + beta * dp;
    T curv = dp - dm;
    T mix = xv * (nn - xv) / (nn * nn);
    T lhs = nab * nab;
    T rhs = alpha * dm * dm + beta * dp * dp - mix * curv * curv;
    rep.nabla.push_back(nab);
    rep.identity_lhs.push_back(lhs);
    rep.identity_rhs.push_back(rhs);
    rep.max_identity_gap = std::max(rep.max_identity_gap, std::abs(to_double(T(lhs - rhs))));
    const T& p = law.p(x);
    e_sq += p * lhs;
    if (x > 0 && x < n) e_mix += p * mix * curv * curv;
    mean += p * gx;
    second += p * gx * gx;
  }
  T th;
  if constexpr (std::is_same_v<T, Rational>) {
    th = exact_decimal(theta);
  } else {
    th = theta;
  }
  rep.upper = e_sq;
  rep.lower = e_sq - T(nn - T(2)) / T(2) * e_mix;
  rep.variance = second - mean * mean;
  rep.variance_ratio = rep.variance / (nn * th * (T(1) - th));
  rep.two_sided = rep.lower <= rep.variance_ratio && rep.variance_ratio <= rep.upper;
  return rep;
}

// ---------------------------------------------------------------------------
// Direct remainder estimate

struct RemainderEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  bool enumerated = false;
  long samples = 0;
  double zero_fraction = 0.0;
};

struct RemainderOptions {
  unsigned threads = 0;
  std::size_t shards = 64;
  double enumeration_limit = 1e7;  // configurations N^{2n+2}
  double max_zero_fraction = 0.999;
};

/// R_n for n in {1, 2} from its 2n+2-copy integral.  X1, X2 are drawn from p; each interior
/// pair is drawn uniformly on the window set by the previous pair, which cancels the 1/p
/// factors of the kernel against a squared window length.
inline RemainderEstimate remainder_mc(const DistributionSpec& spec, const TestFunction& f, const TestFunction& g,
                                      const HChoice& h, SignSequence signs, int n, long samples, std::uint64_t seed,
                                      const RemainderOptions& opts = {}) {
  if (n != 1 && n != 2) throw InvalidArgument("the direct remainder is implemented for n = 1 and n = 2");
  if (signs.empty()) signs = default_signs(spec, n);
  signs = signs.for_order(n);
  const bool discrete = spec.is_discrete();
  if (discrete == signs.is_continuous()) throw InvalidArgument("sign sequence does not match the law");
  const TestFunction fn = iterate_f(f, h.h, signs, n, h.h1);
  const TestFunction gn = iterate_f(g, h.h, signs, n, h.h1);
  auto dh = [&](int i, double x) {
    double d = discrete ? delta(h.step(i), -signs.at(i), x) : h.step(i).derivative(x);
    return d;
  };
  const int last_gap = discrete ? 1 : 0;  // chi^{ell^2}(y, z): y <= z - ell^2
  RemainderEstimate est;

  if (discrete) {
    auto [lo, hi] = discrete_window(spec);
    const double N = static_cast<double>(hi - lo + 1);
    if (std::pow(N, 2 * n + 2) <= opts.enumeration_limit) {
      auto law = make_discrete_law<double>(spec);
      std::vector<double> dhv[3];
      for (int i = 1; i <= n; ++i) {
        for (long x = lo; x <= hi; ++x) dhv[i].push_back(dh(i, static_cast<double>(x)));
      }
      // Sum over the interior pairs given the outer pair (left, right) at step i.
      std::function<double(long, long, int)> inner = [&](long left, long right, int i) -> double {
        long a = std::max(lo, left + a_of(signs.at(i)));
        long b = std::min(hi, right - b_of(signs.at(i)));
        double s = 0.0;
        for (long y = a; y <= b; ++y) {
          for (long z = a; z <= b; ++z) {
            double w = dhv[i][static_cast<std::size_t>(y - lo)] * dhv[i][static_cast<std::size_t>(z - lo)];
            if (i == n) {
              if (y > z - last_gap) continue;
              double yd = static_cast<double>(y), zd = static_cast<double>(z);
              s += w * (fn(zd) - fn(yd)) * (gn(zd) - gn(yd));
            } else {
              s += w * inner(y, z, i + 1);
            }
          }
        }
        return s;
      };
      double total = 0.0;
      for (long x1 = lo; x1 <= hi; ++x1) {
        for (long x2 = lo; x2 <= hi; ++x2) total += law.p(x1) * law.p(x2) * inner(x1, x2, 1);
      }
      est.estimate = total;
      est.enumerated = true;
      return est;
    }
  }
  if (samples < 2) throw InvalidArgument("Monte Carlo needs at least two samples");
  const std::size_t shards = std::max<std::size_t>(1, opts.shards);
  std::vector<detail::RunningMoments> mom(shards);
  std::vector<long> zeros(shards, 0);
  const long base = samples / static_cast<long>(shards), extra = samples % static_cast<long>(shards);
  parallel_for(
      shards,
      [&](std::size_t s) {
        CounterRng rng(seed, 0x5eed0000u + s);
        long count = base + (static_cast<long>(s) < extra ? 1 : 0);
        for (long c = 0; c < count; ++c) {
          double left = spec.sample(rng), right = spec.sample(rng);
          double weight = 1.0, y = 0.0, z = 0.0;
          for (int i = 1; i <= n && weight != 0.0; ++i) {
            double a = left + a_of(signs.at(i)), b = right - b_of(signs.at(i));
            double len = discrete ? (b - a + 1.0) : (b - a);
            if (len <= 0.0) {
              weight = 0.0;
              break;
            }
            double u1 = rng.uniform(), u2 = rng.uniform();
            if (discrete) {
              y = a + std::floor(u1 * len);
              z = a + std::floor(u2 * len);
            } else {
              y = a + u1 * len;
              z = a + u2 * len;
            }
            weight *= len * len * dh(i, y) * dh(i, z);
            left = y;
            right = z;
          }
          double v = 0.0;
          if (weight != 0.0 && y <= z - last_gap) {
            v = weight * (fn(z) - fn(y)) * (gn(z) - gn(y));
          } else {
            ++zeros[s];
          }
          mom[s].push(v);
        }
      },
      opts.threads ? opts.threads : default_threads());
  detail::RunningMoments total;
  long zero_count = 0;
  for (std::size_t s = 0; s < shards; ++s) {
    total.merge(mom[s]);
    zero_count += zeros[s];
  }
  est.samples = samples;
  est.zero_fraction = static_cast<double>(zero_count) / static_cast<double>(samples);
  if (est.zero_fraction > opts.max_zero_fraction) {
    throw DomainError("window rejection rate " + std::to_string(est.zero_fraction) +
                      " is too high; order " + std::to_string(n) + " is infeasible for this support");
  }
  est.estimate = total.mean;
  est.std_error = total.std_error();
  return est;
}

}  // namespace covexp
