#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <system_error>

#include "covexp/errors.hpp"

namespace covexp {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline constexpr unsigned kDefaultBitBudget = 1u << 16;

/// Parses "3", "-0.25", "1e-3" or "3/10" exactly.
inline Rational parse_rational(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  if (text.empty()) throw InvalidArgument("empty rational literal");
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Rational num = parse_rational(text.substr(0, slash));
    Rational den = parse_rational(text.substr(slash + 1));
    if (den == 0) throw InvalidArgument("zero denominator in '" + std::string(text) + "'");
    return num / den;
  }
  bool negative = false;
  std::size_t i = 0;
  if (text[i] == '+' || text[i] == '-') {
    negative = text[i] == '-';
    ++i;
  }
  BigInt mantissa = 0;
  long exponent = 0;
  bool any_digit = false;
  bool after_point = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c >= '0' && c <= '9') {
      mantissa = mantissa * 10 + (c - '0');
      if (after_point) --exponent;
      any_digit = true;
    } else if (c == '.' && !after_point) {
      after_point = true;
    } else if (c == 'e' || c == 'E') {
      long e = 0;
      auto rest = text.substr(i + 1);
      if (!rest.empty() && rest.front() == '+') rest.remove_prefix(1);
      auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), e);
      if (ec != std::errc{} || ptr != rest.data() + rest.size()) {
        throw InvalidArgument("bad exponent in '" + std::string(text) + "'");
      }
      exponent += e;
      i = text.size();
      break;
    } else {
      throw InvalidArgument("not a number: '" + std::string(text) + "'");
    }
  }
  if (!any_digit) throw InvalidArgument("not a number: '" + std::string(text) + "'");
  Rational value(mantissa);
  if (exponent > 0) {
    value *= Rational(boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(exponent)));
  } else if (exponent < 0) {
    value /= Rational(boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(-exponent)));
  }
  return negative ? Rational(-value) : value;
}

/// Rational with the shortest decimal expansion that round-trips to `value`
/// (0.3 becomes 3/10, not the binary fraction nearest to it).
inline Rational exact_decimal(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("non-finite value has no rational form");
  char buffer[64];
  auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  if (ec != std::errc{}) throw InvalidArgument("cannot format value");
  return parse_rational(std::string_view(buffer, static_cast<std::size_t>(ptr - buffer)));
}

inline double to_double(const Rational& value) { return value.convert_to<double>(); }
inline double to_double(double value) { return value; }

inline unsigned bit_size(const Rational& value) {
  auto bits = [](const BigInt& v) -> unsigned {
    return v == 0 ? 0u : static_cast<unsigned>(boost::multiprecision::msb(abs(v))) + 1u;
  };
  return std::max(bits(boost::multiprecision::numerator(value)),
                  bits(boost::multiprecision::denominator(value)));
}

inline void check_bit_budget(const Rational& value, unsigned budget = kDefaultBitBudget) {
  if (bit_size(value) > budget) {
    throw OverflowError("exact rational exceeded bit budget of " + std::to_string(budget));
  }
}

inline void check_bit_budget(double, unsigned = kDefaultBitBudget) {}

inline std::string to_string(const Rational& value) { return value.str(); }

inline Rational rational_pow(const Rational& base, unsigned e) {
  Rational r(1), b(base);
  while (e) {
    if (e & 1u) r *= b;
    e >>= 1;
    if (e) b *= b;
  }
  return r;
}

}  // namespace covexp
