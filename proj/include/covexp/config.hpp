#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "covexp/distributions.hpp"
#include "covexp/errors.hpp"
#include "covexp/expression.hpp"
#include "covexp/rational.hpp"

namespace covexp {

/// "n=10,theta=0.3" -> {{"n", 10}, {"theta", 0.3}}.
inline Params parse_params(const std::string& text) {
  Params out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    item = trim(item);
    if (item.empty()) continue;
    auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("parameter '" + item + "' is not of the form key=value");
    std::string key = trim(item.substr(0, eq)), val = trim(item.substr(eq + 1));
    try {
      std::size_t used = 0;
      double v = std::stod(val, &used);
      if (used != val.size()) throw std::invalid_argument(val);
      out[key] = v;
    } catch (const std::exception&) {
      throw ConfigError("parameter '" + key + "' has a non-numeric value '" + val + "'");
    }
  }
  return out;
}

namespace detail {

inline double json_bound(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    std::string s = j.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ConfigError("support bounds must be numbers or \"inf\"/\"-inf\"");
}

inline Rational json_rational(const nlohmann::json& j) {
  if (j.is_number_integer()) return Rational(j.get<long long>());
  if (j.is_number()) return exact_decimal(j.get<double>());
  if (j.is_string()) return parse_rational(j.get<std::string>());
  throw ConfigError("pmf entries must be numbers or strings like \"3/10\"");
}

}  // namespace detail

/// Distribution document:
///   {"builtin": "binomial", "params": {"n": 10, "theta": 0.3}}
///   {"kind": "discrete", "support": [0, 2], "pmf": ["1/5", "3/10", "1/2"]}
///   {"kind": "continuous", "support": [0, "inf"], "density_expr": "x*exp(-x)", "params": {}}
inline DistributionSpec distribution_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("distribution config must be an object");
  const nlohmann::json& d = doc.contains("distribution") ? doc.at("distribution") : doc;
  Params params;
  if (d.contains("params")) {
    if (!d.at("params").is_object()) throw ConfigError("'params' must be an object");
    for (auto& [k, v] : d.at("params").items()) {
      if (!v.is_number()) throw ConfigError("parameter '" + k + "' must be numeric");
      params[k] = v.get<double>();
    }
  }
  std::string name = d.value("name", std::string());
  if (d.contains("builtin")) {
    try {
      return builtin(d.at("builtin").get<std::string>(), params);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  }
  std::string kind = d.value("kind", std::string());
  if (d.contains("pmf")) {
    if (!kind.empty() && kind != "discrete") throw ConfigError("'pmf' needs kind = discrete");
    const auto& pmf = d.at("pmf");
    if (!pmf.is_array() || pmf.empty()) throw ConfigError("'pmf' must be a nonempty array");
    long lo = 0;
    if (d.contains("support")) {
      const auto& s = d.at("support");
      if (!s.is_array() || s.empty() || !s[0].is_number_integer()) throw ConfigError("'support' must start with an integer");
      lo = s[0].get<long>();
      if (s.size() > 1 && s[1].get<long>() != lo + static_cast<long>(pmf.size()) - 1) {
        throw ConfigError("'support' does not match the pmf length");
      }
    }
    std::vector<Rational> mass;
    for (const auto& m : pmf) mass.push_back(detail::json_rational(m));
    return tabulated_pmf(lo, std::move(mass), name.empty() ? "pmf" : name);
  }
  if (d.contains("density_expr")) {
    if (!kind.empty() && kind != "continuous") throw ConfigError("'density_expr' needs kind = continuous");
    if (!d.contains("support") || !d.at("support").is_array() || d.at("support").size() != 2) {
      throw ConfigError("'density_expr' needs a two-element 'support'");
    }
    double lo = detail::json_bound(d.at("support")[0]), hi = detail::json_bound(d.at("support")[1]);
    Expression e = Expression::compile(d.at("density_expr").get<std::string>(), params);
    return density_law([e](double x) { return e(x); }, lo, hi, name.empty() ? "density" : name);
  }
  throw ConfigError("distribution config needs one of 'builtin', 'pmf' or 'density_expr'");
}

inline DistributionSpec load_distribution_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return distribution_from_json(doc);
}

}  // namespace covexp
