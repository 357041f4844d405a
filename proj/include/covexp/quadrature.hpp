#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <utility>
#include <vector>

#include "covexp/errors.hpp"

namespace covexp {

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  int max_intervals = 4000;
};

struct QuadratureResult {
  std::vector<double> value;
  double error = 0.0;
  long evaluations = 0;
};

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights (QUADPACK qk15).
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo, hi;
  std::vector<double> value;
  double error;
  int depth;
};

inline double norm_inf(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// One GK15 panel for a vector-valued integrand; error is the QUADPACK estimate
// taken componentwise, reduced with the max norm.
template <class F>
Panel gk15(F& f, double lo, double hi, std::size_t dim, int depth) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  std::vector<double> kron(dim, 0.0), gauss(dim, 0.0), resabs(dim, 0.0), resasc(dim, 0.0);
  std::array<std::vector<double>, 15> fv;
  fv[7] = f(center);
  for (int j = 0; j < 7; ++j) {
    fv[j] = f(center - half * kXgk[j]);
    fv[14 - j] = f(center + half * kXgk[j]);
  }
  for (std::size_t c = 0; c < dim; ++c) {
    double fc = fv[7][c];
    double k = fc * kWgk[7];
    double g = fc * kWg[3];
    double ra = std::abs(k);
    for (int j = 0; j < 7; ++j) {
      double s = fv[j][c] + fv[14 - j][c];
      k += kWgk[j] * s;
      ra += kWgk[j] * (std::abs(fv[j][c]) + std::abs(fv[14 - j][c]));
      if (j % 2 == 1) g += kWg[j / 2] * s;
    }
    double mean = 0.5 * k;
    double asc = kWgk[7] * std::abs(fc - mean);
    for (int j = 0; j < 7; ++j) {
      asc += kWgk[j] * (std::abs(fv[j][c] - mean) + std::abs(fv[14 - j][c] - mean));
    }
    kron[c] = k * half;
    gauss[c] = g * half;
    resabs[c] = ra * std::abs(half);
    resasc[c] = asc * std::abs(half);
  }
  double err = 0.0;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr double tiny = std::numeric_limits<double>::min();
  for (std::size_t c = 0; c < dim; ++c) {
    double e = std::abs(kron[c] - gauss[c]);
    if (resasc[c] != 0.0 && e != 0.0) e = resasc[c] * std::min(1.0, std::pow(200.0 * e / resasc[c], 1.5));
    if (resabs[c] > tiny / (50.0 * eps)) e = std::max(eps * 50.0 * resabs[c], e);
    err = std::max(err, e);
  }
  for (double v : kron) {
    if (!std::isfinite(v)) throw ConvergenceError("non-finite integrand value");
  }
  return Panel{lo, hi, std::move(kron), err, depth};
}

}  // namespace detail

/// Globally adaptive GK15 integration of a vector-valued integrand of fixed dimension.
/// Infinite endpoints are mapped onto (0, 1] by t = a + (1 - s)/s; `breakpoints`
/// inside (a, b) always start a new segment.
template <class F>
QuadratureResult integrate_vector(F&& f, std::size_t dim, double a, double b,
                                  std::vector<double> breakpoints = {},
                                  const QuadratureOptions& opts = {}) {
  QuadratureResult result;
  result.value.assign(dim, 0.0);
  if (a == b) return result;
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  std::vector<double> cuts{a};
  std::sort(breakpoints.begin(), breakpoints.end());
  for (double c : breakpoints) {
    if (c > cuts.back() && c < b) cuts.push_back(c);
  }
  if (std::isinf(a) && std::isinf(b) && cuts.size() == 1) cuts.push_back(0.0);
  cuts.push_back(b);

  long evaluations = 0;
  // Each segment is integrated in its own mapped coordinate.
  struct Segment {
    double lo, hi;
    int map;  // 0 finite, 1 right-infinite, -1 left-infinite
  };
  std::vector<Segment> segments;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    double lo = cuts[i], hi = cuts[i + 1];
    if (std::isinf(hi)) {
      segments.push_back({lo, hi, 1});
    } else if (std::isinf(lo)) {
      segments.push_back({lo, hi, -1});
    } else {
      segments.push_back({lo, hi, 0});
    }
  }

  struct Item {
    detail::Panel panel;
    std::size_t segment;
    bool operator<(const Item& other) const { return panel.error < other.panel.error; }
  };
  std::priority_queue<Item> heap;
  std::vector<double> total(dim, 0.0);
  double total_error = 0.0;

  auto make_integrand = [&](const Segment& s) {
    return [&, s](double u) -> std::vector<double> {
      ++evaluations;
      if (s.map == 0) return f(u);
      // u in (0, 1]; t = anchor +/- (1 - u)/u, dt = du/u^2
      double t = s.map == 1 ? s.lo + (1.0 - u) / u : s.hi - (1.0 - u) / u;
      std::vector<double> v = f(t);
      double jac = 1.0 / (u * u);
      for (double& x : v) x = x == 0.0 ? 0.0 : x * jac;
      return v;
    };
  };

  for (std::size_t i = 0; i < segments.size(); ++i) {
    auto g = make_integrand(segments[i]);
    double lo = segments[i].map == 0 ? segments[i].lo : 0.0;
    double hi = segments[i].map == 0 ? segments[i].hi : 1.0;
    detail::Panel p = detail::gk15(g, lo, hi, dim, 0);
    for (std::size_t c = 0; c < dim; ++c) total[c] += p.value[c];
    total_error += p.error;
    heap.push(Item{std::move(p), i});
  }

  int intervals = static_cast<int>(segments.size());
  auto tolerance = [&] { return std::max(opts.abs_tol, opts.rel_tol * detail::norm_inf(total)); };
  while (total_error > tolerance()) {
    if (intervals >= opts.max_intervals || heap.empty()) {
      std::ostringstream msg;
      msg << "adaptive quadrature did not converge on [" << a << ", " << b << "]: error estimate "
          << total_error << " after " << intervals << " intervals";
      throw ConvergenceError(msg.str());
    }
    Item worst = heap.top();
    heap.pop();
    if (worst.panel.depth > 60) {
      throw ConvergenceError("adaptive quadrature hit subdivision depth limit");
    }
    auto g = make_integrand(segments[worst.segment]);
    double mid = 0.5 * (worst.panel.lo + worst.panel.hi);
    detail::Panel left = detail::gk15(g, worst.panel.lo, mid, dim, worst.panel.depth + 1);
    detail::Panel right = detail::gk15(g, mid, worst.panel.hi, dim, worst.panel.depth + 1);
    for (std::size_t c = 0; c < dim; ++c) {
      total[c] += left.value[c] + right.value[c] - worst.panel.value[c];
    }
    total_error += left.error + right.error - worst.panel.error;
    heap.push(Item{std::move(left), worst.segment});
    heap.push(Item{std::move(right), worst.segment});
    ++intervals;
  }

  // Re-sum from the panels to shed the drift of the running total.
  std::fill(total.begin(), total.end(), 0.0);
  double err = 0.0;
  while (!heap.empty()) {
    const Item& it = heap.top();
    for (std::size_t c = 0; c < dim; ++c) total[c] += it.panel.value[c];
    err += it.panel.error;
    heap.pop();
  }
  for (double& v : total) v *= sign;
  result.value = std::move(total);
  result.error = err;
  result.evaluations = evaluations;
  return result;
}

template <class F>
double integrate(F&& f, double a, double b, std::vector<double> breakpoints = {},
                 const QuadratureOptions& opts = {}) {
  auto wrapped = [&](double t) { return std::vector<double>{f(t)}; };
  return integrate_vector(wrapped, 1, a, b, std::move(breakpoints), opts).value[0];
}

}  // namespace covexp
