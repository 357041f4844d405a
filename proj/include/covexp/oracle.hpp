#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "covexp/calculus.hpp"
#include "covexp/distributions.hpp"
#include "covexp/errors.hpp"
#include "covexp/parallel.hpp"
#include "covexp/quadrature.hpp"
#include "covexp/rational.hpp"
#include "covexp/rng.hpp"

namespace covexp {

using Matrix = Eigen::MatrixXd;
using RationalMatrix = std::vector<std::vector<Rational>>;

enum class OracleMethod { ExactQuadrature, ExactSummation, MonteCarlo };

inline std::string oracle_method_name(OracleMethod m) {
  switch (m) {
    case OracleMethod::ExactQuadrature: return "quadrature";
    case OracleMethod::ExactSummation: return "summation";
    case OracleMethod::MonteCarlo: return "monte-carlo";
  }
  return "?";
}

struct OracleResult {
  Matrix value;
  OracleMethod method = OracleMethod::ExactQuadrature;
  std::optional<double> std_error;  // Monte Carlo only
  long samples = 0;
  std::uint64_t seed = 0;
  std::optional<RationalMatrix> exact;  // rational summation path

  double scalar() const { return value(0, 0); }
};

/// Tighter than the weight defaults; the oracle is the reference for everything else.
inline constexpr QuadratureOptions kOracleQuadrature{1e-14, 1e-13, 20000};

inline Matrix to_matrix(const RationalMatrix& m) {
  Matrix out(static_cast<Eigen::Index>(m.size()), m.empty() ? 0 : static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = to_double(m[i][j]);
  }
  return out;
}

inline double min_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

inline bool all_exact(const std::vector<TestFunction>& fs) {
  for (const auto& f : fs) {
    if (!f.is_exact()) return false;
  }
  return true;
}

namespace detail {

template <class T>
std::vector<std::vector<T>> cross_covariance(const DiscreteLaw<T>& law, const std::vector<TestFunction>& fs,
                                             const std::vector<TestFunction>& gs) {
  const std::size_t r = fs.size(), s = gs.size();
  std::vector<std::vector<T>> fv(r, std::vector<T>(law.size())), gv(s, std::vector<T>(law.size()));
  std::vector<T> mf(r, T(0)), mg(s, T(0));
  for (std::size_t t = 0; t < law.size(); ++t) {
    T x(law.lo() + static_cast<long>(t));
    const T& p = law.masses()[t];
    for (std::size_t i = 0; i < r; ++i) {
      fv[i][t] = fs[i].eval(x);
      mf[i] += p * fv[i][t];
    }
    for (std::size_t j = 0; j < s; ++j) {
      gv[j][t] = gs[j].eval(x);
      mg[j] += p * gv[j][t];
    }
  }
  std::vector<std::vector<T>> out(r, std::vector<T>(s, T(0)));
  for (std::size_t t = 0; t < law.size(); ++t) {
    const T& p = law.masses()[t];
    for (std::size_t i = 0; i < r; ++i) {
      T df = fv[i][t] - mf[i];
      for (std::size_t j = 0; j < s; ++j) out[i][j] += p * df * (gv[j][t] - mg[j]);
    }
  }
  return out;
}

}  // namespace detail

/// Cov[f_i(X), g_j(X)] by summation (exact rationals when the pmf and all functions
/// allow it) or by adaptive quadrature in the law's coordinate.
inline OracleResult covariance_matrix_exact(const DistributionSpec& spec, const std::vector<TestFunction>& fs,
                                            const std::vector<TestFunction>& gs,
                                            const QuadratureOptions& opts = kOracleQuadrature,
                                            double eps_tail = kDefaultTail) {
  if (fs.empty() || gs.empty()) throw InvalidArgument("covariance needs at least one function on each side");
  OracleResult res;
  const auto r = static_cast<Eigen::Index>(fs.size()), s = static_cast<Eigen::Index>(gs.size());
  if (spec.is_discrete()) {
    res.method = OracleMethod::ExactSummation;
    if (spec.has_exact_pmf() && all_exact(fs) && all_exact(gs)) {
      auto law = make_discrete_law<Rational>(spec, eps_tail);
      res.exact = detail::cross_covariance(law, fs, gs);
      res.value = to_matrix(*res.exact);
    } else {
      auto law = make_discrete_law<double>(spec, eps_tail);
      auto m = detail::cross_covariance(law, fs, gs);
      res.value.resize(r, s);
      for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < s; ++j) res.value(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
    return res;
  }
  res.method = OracleMethod::ExactQuadrature;
  const std::size_t nf = fs.size(), ng = gs.size();
  auto whole = [&](auto&& fn, std::size_t dim) {
    double m = spec.median();
    auto a = integrate_against(spec, fn, dim, spec.lower(), m, opts);
    auto b = integrate_against(spec, fn, dim, m, spec.upper(), opts);
    for (std::size_t c = 0; c < dim; ++c) a[c] += b[c];
    return a;
  };
  try {
    auto means = whole(
        [&](double t) {
          std::vector<double> v(nf + ng);
          for (std::size_t i = 0; i < nf; ++i) v[i] = fs[i](t);
          for (std::size_t j = 0; j < ng; ++j) v[nf + j] = gs[j](t);
          return v;
        },
        nf + ng);
    auto prods = whole(
        [&](double t) {
          std::vector<double> v(nf * ng);
          for (std::size_t i = 0; i < nf; ++i) {
            double df = fs[i](t) - means[i];
            for (std::size_t j = 0; j < ng; ++j) v[i * ng + j] = df * (gs[j](t) - means[nf + j]);
          }
          return v;
        },
        nf * ng);
    res.value.resize(r, s);
    for (std::size_t i = 0; i < nf; ++i) {
      for (std::size_t j = 0; j < ng; ++j) {
        double v = prods[i * ng + j];
        if (!std::isfinite(v)) throw ConvergenceError("non-finite covariance");
        res.value(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      }
    }
  } catch (const ConvergenceError& e) {
    throw ConvergenceError("covariance integral does not converge under '" + spec.name() + "': " + e.what());
  }
  return res;
}

inline OracleResult covariance_exact(const DistributionSpec& spec, const TestFunction& f, const TestFunction& g,
                                     const QuadratureOptions& opts = kOracleQuadrature) {
  return covariance_matrix_exact(spec, {f}, {g}, opts);
}

// ---------------------------------------------------------------------------
// Two-copy Monte Carlo

struct TwoCopyOptions {
  bool force_mc = false;          // skip exact enumeration on small supports
  std::size_t enumeration_limit = 64;
  unsigned threads = 0;           // 0: default_threads()
  std::size_t shards = 64;        // fixed, so results do not depend on the thread count
};

struct TwoCopyResult {
  OracleResult indicator;  // E[(f2 - f1)(g2 - g1) 1{X1 < X2}]
  OracleResult symmetric;  // E[(f2 - f1)(g2 - g1)] / 2
  // Standard error of the difference of the two estimators on the shared stream.
  double difference_std_error = 0.0;
};

namespace detail {

struct RunningMoments {
  double n = 0, mean = 0, m2 = 0;

  void push(double x) {
    n += 1;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }

  void merge(const RunningMoments& o) {
    if (o.n == 0) return;
    double total = n + o.n;
    double d = o.mean - mean;
    mean += d * o.n / total;
    m2 += o.m2 + d * d * n * o.n / total;
    n = total;
  }

  double std_error() const { return n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0; }
};

}  // namespace detail

inline TwoCopyResult covariance_mc_twocopy(const DistributionSpec& spec, const TestFunction& f, const TestFunction& g,
                                           long samples, std::uint64_t seed, const TwoCopyOptions& opts = {}) {
  TwoCopyResult out;
  if (spec.is_discrete() && !opts.force_mc) {
    auto [lo, hi] = discrete_window(spec);
    if (static_cast<std::size_t>(hi - lo + 1) <= opts.enumeration_limit) {
      auto both = [&](auto law) {
        using T = typename std::decay_t<decltype(law)>::value_type;
        T ind(0), sym(0);
        for (long a = law.lo(); a <= law.hi(); ++a) {
          for (long b = law.lo(); b <= law.hi(); ++b) {
            T d = (f.eval(T(b)) - f.eval(T(a))) * (g.eval(T(b)) - g.eval(T(a))) * law.p(a) * law.p(b);
            if (a < b) ind += d;
            sym += d;
          }
        }
        sym /= T(2);
        return std::pair<T, T>(ind, sym);
      };
      OracleResult ri, rs;
      ri.method = rs.method = OracleMethod::ExactSummation;
      if (spec.has_exact_pmf() && f.is_exact() && g.is_exact()) {
        auto [i, s] = both(make_discrete_law<Rational>(spec));
        ri.exact = RationalMatrix{{i}};
        rs.exact = RationalMatrix{{s}};
        ri.value = to_matrix(*ri.exact);
        rs.value = to_matrix(*rs.exact);
      } else {
        auto [i, s] = both(make_discrete_law<double>(spec));
        ri.value = Matrix::Constant(1, 1, i);
        rs.value = Matrix::Constant(1, 1, s);
      }
      out.indicator = std::move(ri);
      out.symmetric = std::move(rs);
      return out;
    }
  }
  if (samples < 2) throw InvalidArgument("Monte Carlo needs at least two samples");
  const std::size_t shards = std::max<std::size_t>(1, opts.shards);
  std::vector<detail::RunningMoments> ind(shards), sym(shards), diff(shards);
  const long base = samples / static_cast<long>(shards), extra = samples % static_cast<long>(shards);
  parallel_for(
      shards,
      [&](std::size_t s) {
        CounterRng rng(seed, s);
        long count = base + (static_cast<long>(s) < extra ? 1 : 0);
        for (long i = 0; i < count; ++i) {
          double x1 = spec.sample(rng), x2 = spec.sample(rng);
          double d = (f(x2) - f(x1)) * (g(x2) - g(x1));
          double a = x1 < x2 ? d : 0.0, b = 0.5 * d;
          ind[s].push(a);
          sym[s].push(b);
          diff[s].push(a - b);
        }
      },
      opts.threads ? opts.threads : default_threads());
  detail::RunningMoments mi, ms, md;
  for (std::size_t s = 0; s < shards; ++s) {
    mi.merge(ind[s]);
    ms.merge(sym[s]);
    md.merge(diff[s]);
  }
  auto pack = [&](const detail::RunningMoments& m) {
    OracleResult r;
    r.method = OracleMethod::MonteCarlo;
    r.value = Matrix::Constant(1, 1, m.mean);
    r.std_error = m.std_error();
    r.samples = samples;
    r.seed = seed;
    return r;
  };
  out.indicator = pack(mi);
  out.symmetric = pack(ms);
  out.difference_std_error = md.std_error();
  return out;
}

// ---------------------------------------------------------------------------
// Lagrange identity

template <class T>
struct LagrangeReport {
  std::vector<std::vector<T>> lhs, first, remainder, rhs;
  T second{0};  // E[g^2 Phi]
  double max_abs_gap = 0.0;
  double remainder_min_eigenvalue = 0.0;
};

/// Both sides of E[v g Phi] E[v' g Phi] = E[v v' Phi] E[g^2 Phi] - R, with Phi the window
/// kernel chi^ell(u, x) chi^-ell(x, w) / p(x) and R the two-copy remainder over x3 < x4.
/// Expectations are taken literally, p(x) against 1/p(x).
template <class T>
LagrangeReport<T> lagrange_identity_check(const DiscreteLaw<T>& law, const std::vector<TestFunction>& v,
                                          const TestFunction& g, long u, long w, int ell) {
  if (law.size() > 64) throw InvalidArgument("Lagrange enumeration needs a support of at most 64 points");
  if (ell != 1 && ell != -1) throw InvalidArgument("discrete Lagrange check needs ell = +1 or -1");
  if (u > w) throw InvalidArgument("window needs u <= w");
  const std::size_t r = v.size();
  if (r == 0) throw InvalidArgument("v needs at least one component");
  auto in_window = [&](long x) { return x >= u + a_of(ell) && x <= w - b_of(ell); };
  auto zeros = [&] { return std::vector<std::vector<T>>(r, std::vector<T>(r, T(0))); };
  LagrangeReport<T> rep;
  rep.first = zeros();
  rep.remainder = zeros();
  std::vector<T> vg(r, T(0));
  for (long x = law.lo(); x <= law.hi(); ++x) {
    if (!in_window(x)) continue;
    const T& p = law.p(x);
    T phi = T(1) / p;
    T gx = g.eval(T(x));
    std::vector<T> vx(r);
    for (std::size_t i = 0; i < r; ++i) vx[i] = v[i].eval(T(x));
    for (std::size_t i = 0; i < r; ++i) {
      vg[i] += p * vx[i] * gx * phi;
      for (std::size_t j = 0; j < r; ++j) rep.first[i][j] += p * vx[i] * vx[j] * phi;
    }
    rep.second += p * gx * gx * phi;
  }
  // chi^{ell^2}(x3, x4) with ell^2 = 1 is x3 <= x4 - 1.
  for (long x3 = law.lo(); x3 <= law.hi(); ++x3) {
    if (!in_window(x3)) continue;
    for (long x4 = x3 + 1; x4 <= law.hi(); ++x4) {
      if (!in_window(x4)) continue;
      const T& p3 = law.p(x3);
      const T& p4 = law.p(x4);
      T phi = T(1) / (p3 * p4);
      T g3 = g.eval(T(x3)), g4 = g.eval(T(x4));
      std::vector<T> d(r);
      for (std::size_t i = 0; i < r; ++i) d[i] = v[i].eval(T(x3)) * g4 - v[i].eval(T(x4)) * g3;
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) rep.remainder[i][j] += p3 * p4 * d[i] * d[j] * phi;
      }
    }
  }
  rep.lhs = zeros();
  rep.rhs = zeros();
  Matrix rem(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      rep.lhs[i][j] = vg[i] * vg[j];
      rep.rhs[i][j] = rep.first[i][j] * rep.second - rep.remainder[i][j];
      rep.max_abs_gap = std::max(rep.max_abs_gap, std::abs(to_double(T(rep.lhs[i][j] - rep.rhs[i][j]))));
      rem(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = to_double(rep.remainder[i][j]);
    }
  }
  rep.remainder_min_eigenvalue = min_eigenvalue(rem);
  return rep;
}

/// A random Lagrange instance: rational pmf on up to `max_support` points, tables v and g.
struct LagrangeInstance {
  long lo = 0;
  std::vector<Rational> mass;
  std::vector<TestFunction> v;
  TestFunction g;
  long u = 0, w = 0;
  int ell = -1;
};

inline LagrangeInstance random_lagrange_instance(CounterRng& rng, int max_support = 8, int max_r = 2) {
  auto draw = [&](long lo, long hi) {
    return lo + static_cast<long>(rng.uniform() * static_cast<double>(hi - lo + 1));
  };
  LagrangeInstance inst;
  const long n = draw(2, max_support);
  inst.lo = draw(-3, 3);
  BigInt total = 0;
  std::vector<long> raw(static_cast<std::size_t>(n));
  for (auto& m : raw) {
    m = draw(1, 20);
    total += m;
  }
  for (long m : raw) inst.mass.emplace_back(Rational(m) / Rational(total));
  const long r = draw(1, max_r);
  auto table = [&] {
    std::vector<Rational> vals(static_cast<std::size_t>(n));
    for (auto& x : vals) x = Rational(draw(-9, 9), 9 * draw(1, 4));
    return vals;
  };
  for (long i = 0; i < r; ++i) inst.v.push_back(TestFunction::table(inst.lo, table(), "v" + std::to_string(i + 1)));
  inst.g = TestFunction::table(inst.lo, table(), "g");
  inst.u = draw(inst.lo - 1, inst.lo + n - 1);
  inst.w = draw(inst.u, inst.lo + n);
  inst.ell = rng.uniform() < 0.5 ? -1 : 1;
  return inst;
}

// ---------------------------------------------------------------------------
// Classical weights

/// Gamma_k(t) from central incomplete moments (continuous), or falling-factorial sums under
/// the all-minus sign sequence (discrete).
inline double classical_weights_reference(const DistributionSpec& spec, int k, double t,
                                          const QuadratureOptions& opts = kOracleQuadrature) {
  if (k < 1) throw InvalidArgument("order must be at least 1");
  double pt = spec.pdf(t);
  if (!(pt > 0.0)) throw DomainError("p(t) = 0 at t = " + std::to_string(t));
  const double sign = (k % 2) ? 1.0 : -1.0;
  const double den = factorial(k) * factorial(k - 1) * pt;
  if (spec.is_discrete()) {
    if (std::round(t) != t) throw DomainError("discrete law evaluated at a non-integer");
    auto law = make_discrete_law<double>(spec);
    double m1 = 0, m2 = 0, s1 = 0, s2 = 0;
    for (long x = law.lo(); x <= law.hi(); ++x) {
      double p = law.p(x), xd = static_cast<double>(x);
      m1 += p * falling_factorial(xd - t, k);
      m2 += p * falling_factorial(xd - t - 1.0, k - 1);
      if (xd < t + 1) s1 += p * falling_factorial(xd - t - 1.0, k - 1);
      if (xd < t) s2 += p * falling_factorial(xd - t, k);
    }
    return sign * (m1 * s1 - m2 * s2) / den;
  }
  auto powers = [&](double x) { return std::vector<double>{std::pow(x - t, k - 1), std::pow(x - t, k)}; };
  std::vector<double> full(2, 0.0), left;
  try {
    left = integrate_against(spec, powers, 2, spec.lower(), t, opts);
    auto right = integrate_against(spec, powers, 2, t, spec.upper(), opts);
    for (int c = 0; c < 2; ++c) full[static_cast<std::size_t>(c)] = left[static_cast<std::size_t>(c)] + right[static_cast<std::size_t>(c)];
  } catch (const ConvergenceError& e) {
    throw DomainError("moments of order " + std::to_string(k) + " are not finite: " + e.what());
  }
  return sign * (full[1] * left[0] - full[0] * left[1]) / den;
}

}  // namespace covexp
