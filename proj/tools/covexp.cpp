// covexp: weight tables, expansions, bounds and verification suites as CSV or JSON reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "covexp/config.hpp"
#include "covexp/covexp.hpp"
#include "covexp/report.hpp"
#include "covexp/verify.hpp"

namespace {

using namespace covexp;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;

struct VerifyFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string dist = "normal";
  std::string params;
  std::string config;
  std::string h = "id";
  std::string signs;
  std::string orders = "1";
  std::string grid;
  std::string points;
  std::string engine = "auto";
  std::string f = "0,1";
  std::string g;
  std::string fvec;
  int n = 1;
  double theta = 0.3;
  std::uint64_t seed = 0;
  bool seed_given = false;
  long samples = 1'000'000;
  std::string format = "csv";
  std::string output;
  std::string suite = "all";
  bool no_check = false;
  double check_tol = 1e-6;
  double eps_tail = kDefaultTail;
  long direct = 0;
  // lagrange-check
  std::string pmf;
  long lo = 0;
  std::string v = "0,1";
  std::string lg = "1";
  std::optional<long> u, w;
  int ell = -1;
};

void log(const std::string& msg) { std::cerr << "covexp: " << msg << "\n"; }

std::uint64_t resolved_seed(const Options& o) {
  if (o.seed_given) return o.seed;
  if (const char* env = std::getenv("COVEXP_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("COVEXP_SEED is not an unsigned integer: ") + env);
    }
  }
  return 7;
}

std::string header_comment(const Options& o, const std::string& what, const std::string& extra = {}) {
  std::ostringstream os;
  os << "covexp " << kVersion << " " << what << " seed=" << resolved_seed(o) << " tau_bound=1e-08 tau_psd=1e-09"
     << " quad_abs=1e-10 quad_rel=1e-09 oracle_abs=1e-14 oracle_rel=1e-13 eps_tail=" << format_short(o.eps_tail);
  if (!extra.empty()) os << " " << extra;
  return os.str();
}

DistributionSpec load_spec(const Options& o) {
  if (!o.config.empty()) return load_distribution_config(o.config);
  try {
    return builtin(o.dist, parse_params(o.params));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

TestFunction parse_poly(const std::string& text) {
  try {
    return TestFunction(Polynomial::parse(text));
  } catch (const std::exception& e) {
    throw ConfigError("bad coefficient list '" + text + "': " + e.what());
  }
}

std::vector<TestFunction> parse_poly_list(const std::string& text) {
  std::vector<TestFunction> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(parse_poly(item));
  }
  if (out.empty()) throw ConfigError("empty function list");
  return out;
}

SignSequence parse_signs(const Options& o, const DistributionSpec& spec, int n) {
  if (o.signs.empty()) return default_signs(spec, n);
  SignSequence s = SignSequence::parse(o.signs);
  if (spec.is_discrete() == s.is_continuous()) {
    throw ConfigError("sign string '" + o.signs + "' does not match the " +
                      std::string(spec.is_discrete() ? "discrete" : "continuous") + " law '" + spec.name() + "'");
  }
  if (!s.is_continuous() && s.size() < n) {
    throw ConfigError("sign string '" + o.signs + "' is shorter than order " + std::to_string(n));
  }
  return s.for_order(n);
}

std::vector<int> parse_orders(const std::string& text) {
  std::vector<int> out;
  auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      int a = std::stoi(text.substr(0, dots)), b = std::stoi(text.substr(dots + 2));
      if (a < 1 || b < a) throw ConfigError("bad order range '" + text + "'");
      for (int k = a; k <= b; ++k) out.push_back(k);
    } else {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad order list '" + text + "'");
  }
  for (int k : out) {
    if (k < 1) throw ConfigError("orders must be at least 1");
  }
  if (out.empty()) throw ConfigError("no orders given");
  return out;
}

std::vector<double> parse_grid(const Options& o, const DistributionSpec& spec) {
  std::vector<double> pts;
  if (!o.points.empty()) {
    std::stringstream ss(o.points);
    std::string item;
    while (std::getline(ss, item, ',')) pts.push_back(std::stod(item));
  } else if (!o.grid.empty()) {
    std::vector<double> parts;
    std::stringstream ss(o.grid);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(std::stod(item));
    if (parts.size() == 2 && spec.is_discrete()) {
      for (double x = std::ceil(parts[0]); x <= parts[1]; x += 1.0) pts.push_back(x);
    } else if (parts.size() == 3 && parts[2] >= 1 && parts[2] == std::floor(parts[2])) {
      int count = static_cast<int>(parts[2]);
      for (int i = 0; i < count; ++i) {
        pts.push_back(count == 1 ? parts[0] : parts[0] + (parts[1] - parts[0]) * i / (count - 1));
      }
    } else {
      throw ConfigError("grid must be min:max:count (or min:max for a discrete law)");
    }
  } else if (spec.is_discrete()) {
    auto [lo, hi] = discrete_window(spec, o.eps_tail);
    if (hi - lo > 200) hi = lo + 200;
    for (long x = lo; x <= hi; ++x) pts.push_back(static_cast<double>(x));
  } else {
    for (int i = 1; i <= 9; ++i) pts.push_back(spec.quantile(i / 10.0));
  }
  if (spec.is_discrete()) {
    for (double x : pts) {
      if (x != std::floor(x)) throw ConfigError("grid point " + format_double(x) + " is not an integer");
    }
  }
  return pts;
}

/// The engine a table is compared against by default; nullopt when none applies.
std::optional<Engine> alternate_engine(const DistributionSpec& spec, const HChoice& h, Engine primary) {
  if (spec.is_discrete()) {
    if (primary == Engine::DiscreteNestedSum) {
      return h.tag == HTag::Id && !h.h1 ? std::optional<Engine>(Engine::DiscreteIdentity) : std::nullopt;
    }
    return Engine::DiscreteNestedSum;
  }
  if (primary == Engine::ContinuousGeneric) return h.h1 ? std::nullopt : std::optional<Engine>(Engine::SteinHk);
  return Engine::ContinuousGeneric;
}

int cmd_weights(const Options& o) {
  DistributionSpec spec = load_spec(o);
  std::vector<int> orders = parse_orders(o.orders);
  int n = 0;
  for (int k : orders) n = std::max(n, k);
  HChoice h = parse_h(o.h, spec);
  SignSequence signs = parse_signs(o, spec, n);
  WeightOptions wo;
  wo.eps_tail = o.eps_tail;
  WeightEvaluator ev(spec, h, signs, n, parse_engine(o.engine), wo);
  std::vector<double> grid = parse_grid(o, spec);
  WeightTable table = build_weight_table(ev, grid, orders, default_threads());
  log("law=" + spec.name() + " h=" + table.h_name + " signs=" + table.signs.str() + " engine=" + engine_name(table.engine));
  for (double x : table.dropped) log("dropped grid point x=" + format_double(x) + " (p(x) = 0)");
  if (table.grid.empty()) throw ConfigError("no grid point lies where p(x) > 0");

  double worst = 0.0;
  std::string check = "none";
  if (!o.no_check) {
    if (auto alt = alternate_engine(spec, h, table.engine)) {
      WeightEvaluator other(spec, h, signs, n, *alt, wo);
      WeightTable ref = build_weight_table(other, table.grid, orders, default_threads());
      for (std::size_t i = 0; i < table.grid.size(); ++i) {
        for (std::size_t j = 0; j < orders.size(); ++j) {
          double a = table.values[i][j], b = ref.values[i][j];
          worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
        }
      }
      check = engine_name(*alt);
      log("cross-check against " + check + ": max relative gap " + format_double(worst));
    }
  }

  std::string content;
  if (o.format == "json") {
    json doc;
    doc["version"] = kVersion;
    doc["law"] = spec.name();
    doc["h"] = table.h_name;
    doc["signs"] = table.signs.str();
    doc["engine"] = engine_name(table.engine);
    doc["check"] = {{"engine", check}, {"max_relative_gap", worst}, {"tolerance", o.check_tol}};
    json rows = json::array();
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
      for (std::size_t j = 0; j < orders.size(); ++j) {
        rows.push_back({{"x", table.grid[i]}, {"k", orders[j]}, {"gamma", table.values[i][j]},
                        {"ratio", table.ratios[i][j]}});
      }
    }
    doc["rows"] = rows;
    content = doc.dump(2) + "\n";
  } else {
    CsvTable csv(header_comment(o, "weights", "law=" + spec.name() + " h=" + table.h_name + " signs=" + table.signs.str() +
                                                  " check=" + check + " check_tol=" + format_short(o.check_tol)),
                 {"x", "k", "gamma", "ratio", "engine"});
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
      for (std::size_t j = 0; j < orders.size(); ++j) {
        csv.row() << table.grid[i] << orders[j] << table.values[i][j] << table.ratios[i][j] << engine_name(table.engine);
      }
    }
    content = csv.str();
  }
  write_output(o.output, content);
  if (worst > o.check_tol) {
    throw VerifyFailure("engines disagree: max relative gap " + format_double(worst) + " exceeds " +
                        format_double(o.check_tol));
  }
  return kExitOk;
}

double no_negative_zero(double v) { return v == 0.0 ? 0.0 : v; }

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(no_negative_zero(m(i, j)));
    rows.push_back(r);
  }
  return rows;
}

int cmd_expand(const Options& o) {
  DistributionSpec spec = load_spec(o);
  if (o.n < 1) throw ConfigError("--n must be at least 1");
  HChoice h = parse_h(o.h, spec);
  SignSequence signs = parse_signs(o, spec, o.n);
  ExpansionOptions eo;
  eo.engine = parse_engine(o.engine);
  eo.weights.eps_tail = o.eps_tail;
  ExpansionReport rep;
  const bool matrix = !o.fvec.empty();
  if (matrix) {
    rep = expand_matrix(spec, parse_poly_list(o.fvec), h, signs, o.n, eo);
  } else {
    TestFunction f = parse_poly(o.f);
    TestFunction g = o.g.empty() ? f : parse_poly(o.g);
    rep = expand(spec, f, g, h, signs, o.n, eo);
  }
  log("law=" + spec.name() + " h=" + rep.h_name + " signs=" + rep.signs.str() + " engine=" + engine_name(rep.engine) +
      " truth=" + oracle_method_name(rep.truth_method) + (rep.exact ? " exact" : ""));

  std::optional<RemainderEstimate> direct;
  if (o.direct > 0 && !matrix && o.n <= 2) {
    TestFunction f = parse_poly(o.f);
    TestFunction g = o.g.empty() ? f : parse_poly(o.g);
    direct = remainder_mc(spec, f, g, h, signs, o.n, o.direct, resolved_seed(o));
    log("direct remainder " + format_double(direct->estimate) + " +- " + format_double(direct->std_error));
  }

  std::string content;
  if (o.format == "json") {
    json doc;
    doc["version"] = kVersion;
    doc["law"] = spec.name();
    doc["h"] = rep.h_name;
    doc["signs"] = rep.signs.str();
    doc["engine"] = engine_name(rep.engine);
    doc["exact"] = rep.exact;
    doc["truth"] = matrix_json(rep.truth);
    doc["truth_method"] = oracle_method_name(rep.truth_method);
    doc["remainder_path"] = "subtraction";
    json terms = json::array();
    for (int k = 1; k <= rep.order; ++k) {
      const auto& v = rep.verdicts[static_cast<std::size_t>(k - 1)];
      json t = {{"k", k},
                {"term", matrix_json(rep.terms[static_cast<std::size_t>(k - 1)])},
                {"partial_sum", matrix_json(rep.partial_sums[static_cast<std::size_t>(k - 1)])},
                {"remainder", matrix_json(rep.remainders[static_cast<std::size_t>(k - 1)])},
                {"bound", k % 2 ? "upper" : "lower"},
                {"bound_holds", v.bound_holds},
                {"psd_remainder", v.psd},
                {"min_eigenvalue", no_negative_zero(v.min_eigenvalue)}};
      if (rep.exact) t["exact_partial_sum"] = to_string(rep.exact_partial_sums[static_cast<std::size_t>(k - 1)][0][0]);
      terms.push_back(t);
    }
    doc["terms"] = terms;
    if (direct) {
      doc["direct_remainder"] = {{"estimate", direct->estimate},
                                 {"std_error", direct->std_error},
                                 {"enumerated", direct->enumerated},
                                 {"samples", direct->samples},
                                 {"seed", resolved_seed(o)}};
    }
    content = doc.dump(2) + "\n";
  } else {
    std::string extra = "law=" + spec.name() + " h=" + rep.h_name + " signs=" + rep.signs.str() +
                        " engine=" + engine_name(rep.engine) + " truth=" + oracle_method_name(rep.truth_method) +
                        " remainder=subtraction";
    if (direct) {
      extra += " direct_remainder=" + format_double(direct->estimate) + " direct_std_error=" +
               format_double(direct->std_error);
    }
    CsvTable csv(header_comment(o, "expand", extra),
                 {"k", "i", "j", "term", "partial_sum", "truth", "remainder", "bound", "bound_holds", "psd_remainder"});
    for (int k = 1; k <= rep.order; ++k) {
      const auto idx = static_cast<std::size_t>(k - 1);
      const auto& v = rep.verdicts[idx];
      for (Eigen::Index i = 0; i < rep.truth.rows(); ++i) {
        for (Eigen::Index j = 0; j < rep.truth.cols(); ++j) {
          csv.row() << k << static_cast<long>(i + 1) << static_cast<long>(j + 1) << rep.terms[idx](i, j)
                    << rep.partial_sums[idx](i, j) << rep.truth(i, j) << rep.remainders[idx](i, j)
                    << (k % 2 ? "upper" : "lower") << v.bound_holds << v.psd;
        }
      }
    }
    content = csv.str();
  }
  write_output(o.output, content);
  return kExitOk;
}

int cmd_bounds(const Options& o) {
  DistributionSpec spec = load_spec(o);
  HChoice h = parse_h(o.h, spec);
  SignSequence signs = parse_signs(o, spec, 2);
  TestFunction g = parse_poly(o.g.empty() ? o.f : o.g);
  ExpansionOptions eo;
  eo.engine = parse_engine(o.engine);
  eo.weights.eps_tail = o.eps_tail;
  SandwichResult sw = sandwich(spec, g, h, signs, eo);
  CsvTable csv(header_comment(o, "bounds", "law=" + spec.name() + " signs=" + signs.prefix(2).str()),
               {"kind", "lower", "value", "upper", "holds"});
  csv.row() << "sandwich" << sw.lower << sw.variance << sw.upper << sw.holds;
  bool ok = sw.holds;
  if (spec.name() == "binomial" && h.tag == HTag::Id) {
    int n = static_cast<int>(spec.param("n"));
    double theta = spec.param("theta");
    if (g.is_exact()) {
      auto r = binomial_natural_derivative<Rational>(n, theta, g);
      csv.row() << "natural-derivative" << to_double(r.lower) << to_double(r.variance_ratio) << to_double(r.upper)
                << r.two_sided;
      ok = ok && r.two_sided;
    } else {
      auto r = binomial_natural_derivative<double>(n, theta, g);
      csv.row() << "natural-derivative" << r.lower << r.variance_ratio << r.upper << r.two_sided;
      ok = ok && r.two_sided;
    }
  }
  if (o.format == "json") {
    json doc = {{"version", kVersion},
                {"law", spec.name()},
                {"lower", sw.lower},
                {"variance", sw.variance},
                {"upper", sw.upper},
                {"holds", sw.holds}};
    if (sw.exact) {
      doc["exact"] = {{"lower", to_string(sw.exact_lower)},
                      {"variance", to_string(sw.exact_variance)},
                      {"upper", to_string(sw.exact_upper)}};
    }
    write_output(o.output, doc.dump(2) + "\n");
  } else {
    write_output(o.output, csv.str());
  }
  if (!ok) throw VerifyFailure("bound violated");
  return kExitOk;
}

int cmd_verify(const Options& o) {
  std::vector<std::string> suites;
  if (o.suite == "all") {
    suites = suite_names();
  } else {
    std::stringstream ss(o.suite);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (std::find(suite_names().begin(), suite_names().end(), item) == suite_names().end()) {
        throw ConfigError("unknown suite '" + item + "'");
      }
      suites.push_back(item);
    }
  }
  const std::uint64_t seed = resolved_seed(o);
  CsvTable csv(header_comment(o, "verify", "samples=" + std::to_string(o.samples)),
               {"suite", "case", "value", "reference", "gap", "tolerance", "status"});
  bool all_ok = true;
  json doc = {{"version", kVersion}, {"seed", seed}, {"suites", json::array()}};
  for (const auto& name : suites) {
    SuiteResult r;
    if (name == "lagrange") {
      r = verify_lagrange(seed);
    } else if (name == "engines") {
      r = verify_engines();
    } else if (name == "binomial-sandwich") {
      int n = o.n > 1 ? o.n : 10;
      r = verify_binomial_sandwich(n, o.theta, parse_poly(o.g.empty() ? "0,0,0,1" : o.g));
    } else if (name == "psd") {
      r = verify_psd();
    } else if (name == "termination") {
      r = verify_termination();
    } else {
      r = verify_twocopy(o.samples, seed);
    }
    std::cerr << name << ": " << r.passed() << "/" << r.rows.size() << (r.pass() ? " pass" : " FAIL") << "\n";
    all_ok = all_ok && r.pass();
    json rows = json::array();
    for (const auto& row : r.rows) {
      csv.row() << row.suite << row.name << row.value << row.reference << row.gap << row.tolerance
                << (row.pass ? "pass" : "fail");
      rows.push_back({{"case", row.name}, {"value", row.value}, {"reference", row.reference}, {"pass", row.pass}});
    }
    doc["suites"].push_back({{"suite", name}, {"passed", r.passed()}, {"total", r.rows.size()}, {"cases", rows}});
  }
  write_output(o.output, o.format == "json" ? doc.dump(2) + "\n" : csv.str());
  if (!all_ok) throw VerifyFailure("verification failed");
  return kExitOk;
}

int cmd_lagrange(const Options& o) {
  if (o.pmf.empty()) throw ConfigError("lagrange-check needs --pmf");
  std::vector<Rational> mass;
  {
    std::stringstream ss(o.pmf);
    std::string item;
    while (std::getline(ss, item, ',')) mass.push_back(parse_rational(item));
  }
  DistributionSpec spec = tabulated_pmf(o.lo, mass);
  auto law = make_discrete_law<Rational>(spec);
  std::vector<TestFunction> v = parse_poly_list(o.v);
  TestFunction g = parse_poly(o.lg);
  long u = o.u.value_or(law.lo() - (o.ell == 1 ? 1 : 0));
  long w = o.w.value_or(law.hi() + (o.ell == -1 ? 1 : 0));
  auto rep = lagrange_identity_check(law, v, g, u, w, o.ell);
  CsvTable csv(header_comment(o, "lagrange-check",
                              "u=" + std::to_string(u) + " w=" + std::to_string(w) + " ell=" + std::to_string(o.ell) +
                                  " max_abs_gap=" + format_double(rep.max_abs_gap)),
               {"i", "j", "lhs", "rhs", "remainder", "lhs_exact", "rhs_exact"});
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) {
      csv.row() << static_cast<long>(i + 1) << static_cast<long>(j + 1) << to_double(rep.lhs[i][j])
                << to_double(rep.rhs[i][j]) << to_double(rep.remainder[i][j]) << to_string(rep.lhs[i][j])
                << to_string(rep.rhs[i][j]);
    }
  }
  write_output(o.output, csv.str());
  if (rep.max_abs_gap != 0.0) throw VerifyFailure("Lagrange identity gap " + format_double(rep.max_abs_gap));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariance expansion weights, truncated expansions and variance bounds"};
  app.require_subcommand(1);
  Options o;

  // --h names the test function h, so help is long-form only.
  app.set_help_flag("--help", "print help");
  auto common = [&](CLI::App* c) {
    c->set_help_flag("--help", "print help");
    c->add_option("--dist", o.dist, "builtin distribution name");
    c->add_option("--params", o.params, "distribution parameters, e.g. n=10,theta=0.3");
    c->add_option("--config", o.config, "JSON distribution config file");
    c->add_option("--h", o.h, "id | cdf | square | arctan | score | coefficient list");
    c->add_option("--signs", o.signs, "sign string such as +-+ (discrete) or 0 (continuous)");
    c->add_option("--engine", o.engine, "weight engine (auto, closed-pearson, closed-ord, ...)");
    c->add_option("--seed", o.seed, "random seed (default: $COVEXP_SEED or 7)")->each([&](const std::string&) {
      o.seed_given = true;
    });
    c->add_option("--samples", o.samples, "Monte Carlo samples");
    c->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    c->add_option("--output,-o", o.output, "output file (default stdout)");
    c->add_option("--eps-tail", o.eps_tail, "tail mass dropped when truncating an infinite support");
  };

  auto* weights = app.add_subcommand("weights", "tabulate Gamma_k on a grid");
  common(weights);
  weights->add_option("--k", o.orders, "orders, e.g. 2, 1..4 or 1,3");
  weights->add_option("--grid", o.grid, "min:max:count");
  weights->add_option("--points", o.points, "explicit comma-separated points");
  weights->add_flag("--no-check", o.no_check, "skip the alternate-engine cross-check");
  weights->add_option("--check-tol", o.check_tol, "relative tolerance of the cross-check");

  auto* expand_cmd = app.add_subcommand("expand", "truncated covariance expansion");
  common(expand_cmd);
  expand_cmd->add_option("--f", o.f, "f as constant-first coefficients");
  expand_cmd->add_option("--g", o.g, "g as constant-first coefficients (default f)");
  expand_cmd->add_option("--fvec", o.fvec, "matrix mode: components separated by ';'");
  expand_cmd->add_option("--n", o.n, "expansion order");
  expand_cmd->add_option("--direct", o.direct, "also estimate R_n directly with this many samples (n <= 2)");

  auto* bounds = app.add_subcommand("bounds", "two-sided variance bounds");
  common(bounds);
  bounds->add_option("--f,--g", o.g, "g as constant-first coefficients");

  auto* verify = app.add_subcommand("verify", "run verification suites");
  common(verify);
  verify->add_option("--suite", o.suite, "all or a comma list of suites");
  verify->add_option("--n", o.n, "binomial size for binomial-sandwich");
  verify->add_option("--theta", o.theta, "binomial success probability for binomial-sandwich");
  verify->add_option("--g", o.g, "g for binomial-sandwich");

  auto* lagrange = app.add_subcommand("lagrange-check", "exact Lagrange identity check on a pmf");
  common(lagrange);
  lagrange->add_option("--pmf", o.pmf, "masses, e.g. 1/5,3/10,1/2");
  lagrange->add_option("--lo", o.lo, "first support point");
  lagrange->add_option("--v", o.v, "components of v separated by ';'");
  lagrange->add_option("--g", o.lg, "g as coefficients");
  lagrange->add_option("--u", o.u, "window start");
  lagrange->add_option("--w", o.w, "window end");
  lagrange->add_option("--ell", o.ell, "direction +1 or -1")->check(CLI::IsMember({-1, 1}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*weights) return cmd_weights(o);
    if (*expand_cmd) return cmd_expand(o);
    if (*bounds) return cmd_bounds(o);
    if (*verify) return cmd_verify(o);
    if (*lagrange) return cmd_lagrange(o);
  } catch (const VerifyFailure& e) {
    log(e.what());
    return kExitVerify;
  } catch (const ConfigError& e) {
    log(std::string("config error: ") + e.what());
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    log(std::string("invalid argument: ") + e.what());
    return kExitConfig;
  } catch (const DomainError& e) {
    log(std::string("domain error: ") + e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    log(std::string("invalid number: ") + e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log(std::string("numeric failure: ") + e.what());
    return kExitNumeric;
  }
  return kExitConfig;
}
