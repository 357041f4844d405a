#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "covexp/calculus.hpp"
#include "covexp/distributions.hpp"
#include "covexp/errors.hpp"

namespace covexp {

enum class KernelDirection { Continuous, Plus, Minus };

struct KernelValue {
  double x = 0.0;
  double tau = 0.0;
  KernelDirection direction = KernelDirection::Continuous;
};

inline int direction_sign(KernelDirection d) {
  return d == KernelDirection::Plus ? 1 : (d == KernelDirection::Minus ? -1 : 0);
}

/// Gamma_1 h(x) = E[(h(X) - nu(h)) 1{X >= x + b_ell}] / p(x) on an exact discrete law.
/// Uses whichever tail is shorter; both are equal because h - nu(h) has mean zero.
template <class T>
T first_weight_discrete(const DiscreteLaw<T>& law, const TestFunction& h, int ell, long x) {
  if (ell != 1 && ell != -1) throw InvalidArgument("discrete first weight needs ell = +1 or -1");
  if (!law.contains(x)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  T nu = law.expect([&](long y) { return h.eval(T(y)); });
  const long cut = x + b_of(ell);  // right tail is X >= cut, left tail X <= cut - 1
  T acc(0);
  if (cut - law.lo() <= law.hi() - cut) {
    for (long y = law.lo(); y < cut; ++y) acc += law.p(y) * (nu - h.eval(T(y)));
  } else {
    for (long y = std::max(cut, law.lo()); y <= law.hi(); ++y) acc += law.p(y) * (h.eval(T(y)) - nu);
  }
  return acc / law.p(x);
}

/// Returns L_p^ell h(x), normalized so that Gamma_1 h = -L_p^ell h.
inline double inverse_stein(const DistributionSpec& spec, const TestFunction& h, int ell, double x,
                            const QuadratureOptions& opts = {}) {
  double px = spec.pdf(x);
  if (!(px > 0.0)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  if (spec.is_discrete()) {
    if (std::round(x) != x) throw DomainError("discrete law evaluated at a non-integer");
    auto law = make_discrete_law<double>(spec);
    return -first_weight_discrete(law, h, ell, static_cast<long>(x));
  }
  if (ell != 0) throw InvalidArgument("continuous law needs ell = 0");
  double nu;
  if (h.is_identity() && spec.mean()) {
    nu = *spec.mean();
  } else {
    try {
      nu = expectation(spec, [&](double t) { return h(t); }, opts);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("h is not integrable against p: " + std::string(e.what()));
    }
  }
  double tail;
  if (spec.cdf(x) <= 0.5) {
    tail = integrate_against(spec, [&](double t) { return nu - h(t); }, spec.lower(), x, opts);
  } else {
    tail = integrate_against(spec, [&](double t) { return h(t) - nu; }, x, spec.upper(), opts);
  }
  return -tail / px;
}

/// Stein kernel tau^ell_p(x): closed form for Pearson/Ord members, else numeric.
inline KernelValue stein_kernel(const DistributionSpec& spec, KernelDirection direction, double x,
                                const QuadratureOptions& opts = {}) {
  if (!spec.mean()) {
    throw DomainError("'" + spec.name() + "' has no first moment; its Stein kernel is undefined");
  }
  if (!(spec.pdf(x) > 0.0)) throw DomainError("p(x) = 0 at x = " + std::to_string(x));
  const bool discrete = spec.is_discrete();
  if (discrete == (direction == KernelDirection::Continuous)) {
    throw InvalidArgument("kernel direction does not match the law's kind");
  }
  const Family& f = spec.family();
  KernelValue kv{x, 0.0, direction};
  if (f.is_pearson() || (f.is_ord() && direction == KernelDirection::Minus)) {
    kv.tau = (f.delta * x + f.beta) * x + f.gamma;
  } else if (f.is_ord()) {
    kv.tau = x * (f.delta * x + f.beta + 1.0);
  } else {
    kv.tau = -inverse_stein(spec, TestFunction::identity(), direction_sign(direction), x, opts);
  }
  return kv;
}

/// Both sides of f(x2) - f(x1) = E[Phi^ell_p(x1, X, x2) Delta^{-ell} f(X)].
inline std::pair<double, double> representation_check(const DistributionSpec& spec, const TestFunction& f, int ell,
                                                      double x1, double x2, const QuadratureOptions& opts = {}) {
  if (x1 > x2) throw InvalidArgument("representation check needs x1 <= x2");
  double lhs = f(x2) - f(x1);
  double rhs = 0.0;
  if (spec.is_discrete()) {
    if (ell != 1 && ell != -1) throw InvalidArgument("discrete law needs ell = +1 or -1");
    long lo = static_cast<long>(x1) + a_of(ell);
    long hi = static_cast<long>(x2) - b_of(ell);
    if (lo > hi && x1 != x2) throw DomainError("window empty for the chosen direction");
    for (long x = lo; x <= hi; ++x) rhs += delta(f, -ell, static_cast<double>(x));
  } else {
    if (ell != 0) throw InvalidArgument("continuous law needs ell = 0");
    // The kernel's 1/p(x) cancels the density: plain integration of f' over [x1, x2].
    rhs = integrate([&](double t) { return delta(f, 0, t); }, x1, x2, {}, opts);
  }
  return {lhs, rhs};
}

}  // namespace covexp
