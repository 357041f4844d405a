#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string temp_path(const std::string& name) { return ::testing::TempDir() + "covexp_cli_" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args, const std::string& env = "") {
  const std::string err_path = temp_path("stderr.txt");
  std::string cmd = env + (env.empty() ? "" : " ") + "'" COVEXP_CLI_PATH "' " + args + " 2>'" + err_path + "'";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  return out;
}

// Data rows after the comment line and the header.
std::vector<std::vector<std::string>> rows(const std::string& csv) {
  std::vector<std::vector<std::string>> out;
  auto ls = lines(csv);
  for (std::size_t i = 2; i < ls.size(); ++i) out.push_back(fields(ls[i]));
  return out;
}

}  // namespace

TEST(Cli, NormalWeightGrid) {
  auto r = run("weights --dist normal --h id --k 1..4 --grid -2:2:9");
  ASSERT_EQ(r.code, 0) << r.err;
  auto ls = lines(r.out);
  ASSERT_GE(ls.size(), 2u);
  EXPECT_EQ(ls[0].rfind("# covexp ", 0), 0u);
  EXPECT_NE(ls[0].find("seed=7"), std::string::npos);
  EXPECT_NE(ls[0].find("tau_bound="), std::string::npos);
  EXPECT_EQ(ls[1], "x,k,gamma,ratio,engine");
  auto rs = rows(r.out);
  ASSERT_EQ(rs.size(), 36u);
  const double fact[] = {1, 1, 2, 6, 24};
  for (const auto& row : rs) {
    ASSERT_EQ(row.size(), 5u);
    int k = std::stoi(row[1]);
    EXPECT_NEAR(std::stod(row[2]), 1.0 / fact[k], 1e-12) << row[0];
  }
  EXPECT_NE(r.err.find("engine=closed-pearson"), std::string::npos);
}

TEST(Cli, BinomialMinusMinusColumn) {
  auto r = run("weights --dist binomial --params n=10,theta=0.3 --signs \"--\" --k 2");
  ASSERT_EQ(r.code, 0) << r.err;
  auto rs = rows(r.out);
  // Gamma_2^{--}(x) = theta^2 (n-x)(n-x-1)/2 on 0..8; the last two points are outside the window.
  ASSERT_EQ(rs.size(), 11u);
  for (const auto& row : rs) {
    double x = std::stod(row[0]);
    double expect = 0.09 * (10 - x) * (9 - x) / 2;
    EXPECT_NEAR(std::stod(row[2]), expect, 1e-12) << x;
  }
}

TEST(Cli, LevyCdfRatioColumn) {
  auto r = run("weights --dist levy --h cdf --k 1..3 --grid 0.5:5:10");
  ASSERT_EQ(r.code, 0) << r.err;
  auto rs = rows(r.out);
  ASSERT_EQ(rs.size(), 30u);
  for (const auto& row : rs) {
    double x = std::stod(row[0]);
    int k = std::stoi(row[1]);
    // Levy(0, 1): p(x) = exp(-1/(2x)) / sqrt(2 pi x^3), P(x) = erfc(1/sqrt(2x)).
    double p = std::exp(-1.0 / (2 * x)) / std::sqrt(2 * M_PI * x * x * x);
    double P = std::erfc(1.0 / std::sqrt(2 * x));
    double fk = std::tgamma(k + 1.0), fk1 = std::tgamma(k + 2.0);
    double gamma = std::pow(P * (1 - P), k) / (fk * fk1 * p);
    EXPECT_NEAR(std::stod(row[2]), gamma, 1e-9 * gamma) << x << " " << k;
    EXPECT_NEAR(std::stod(row[3]), gamma / p, 1e-9 * gamma / p) << x << " " << k;
  }
}

TEST(Cli, ExpandExamples) {
  auto r = run("expand --dist normal --f \"0,0,1\" --n 2");
  ASSERT_EQ(r.code, 0) << r.err;
  auto ls = lines(r.out);
  EXPECT_EQ(ls[1], "k,i,j,term,partial_sum,truth,remainder,bound,bound_holds,psd_remainder");
  auto rs = rows(r.out);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_NEAR(std::stod(rs[0][3]), 4.0, 1e-12);
  EXPECT_NEAR(std::stod(rs[1][3]), -2.0, 1e-12);
  EXPECT_NEAR(std::stod(rs[1][4]), 2.0, 1e-12);
  EXPECT_LE(std::abs(std::stod(rs[1][6])), 1e-10);
  EXPECT_EQ(rs[0][7], "upper");
  EXPECT_EQ(rs[1][7], "lower");

  auto lin = run("expand --dist normal --f \"0,1\" --n 1");
  ASSERT_EQ(lin.code, 0) << lin.err;
  EXPECT_NEAR(std::stod(rows(lin.out)[0][4]), 1.0, 1e-12);

  auto bin = run("expand --dist binomial --params n=10,theta=0.3 --f \"0,0,0,1\" --signs \"--\" --n 2");
  ASSERT_EQ(bin.code, 0) << bin.err;
  auto br = rows(bin.out);
  ASSERT_EQ(br.size(), 2u);
  double truth = std::stod(br[0][5]);
  EXPECT_GE(std::stod(br[0][4]), truth);
  EXPECT_LE(std::stod(br[1][4]), truth);
  EXPECT_EQ(br[0][8], "true");
  EXPECT_EQ(br[1][8], "true");
}

TEST(Cli, ExpandMatrixJson) {
  auto r = run("expand --dist normal --fvec \"0,1;0,0,1\" --n 1 --format json");
  ASSERT_EQ(r.code, 0) << r.err;
  auto doc = nlohmann::json::parse(r.out);
  ASSERT_TRUE(doc.contains("truth"));
  EXPECT_NEAR(doc["truth"][1][1].get<double>(), 2.0, 1e-12);
  EXPECT_NEAR(doc["truth"][0][1].get<double>(), 0.0, 1e-12);
}

TEST(Cli, BoundsAndLagrange) {
  auto b = run("bounds --dist binomial --params n=10,theta=0.3 --g \"0,0,0,1\"");
  ASSERT_EQ(b.code, 0) << b.err;
  for (const auto& row : rows(b.out)) EXPECT_EQ(row.back(), "true") << row[0];
  auto l = run("lagrange-check --pmf 1/5,3/10,1/2 --lo 0 --v \"0,1;0,0,1\" --g \"0,1\" --u -1 --w 3 --ell -1");
  ASSERT_EQ(l.code, 0) << l.err;
  auto lr = rows(l.out);
  ASSERT_EQ(lr.size(), 4u);
  for (const auto& row : lr) EXPECT_EQ(row[2], row[3]) << row[0] << row[1];
}

TEST(Cli, VerifySuites) {
  auto r = run("verify --suite lagrange --seed 7");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("lagrange: 50/50 pass"), std::string::npos) << r.err;
  auto e = run("verify --suite engines");
  EXPECT_EQ(e.code, 0) << e.err;
  auto s = run("verify --suite binomial-sandwich --n 10 --theta 0.3");
  EXPECT_EQ(s.code, 0) << s.err;
  for (const auto& row : rows(s.out)) EXPECT_EQ(row.back(), "pass");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("weights --dist weibull --k 1").code, 2);
  EXPECT_EQ(run("weights --dist normal --k 1 --signs \"+x\"").code, 2);
  EXPECT_EQ(run("weights --dist normal --k 1 --grid 1:2").code, 2);
  EXPECT_EQ(run("expand --dist binomial --params n=3,theta=0.3 --f \"0,0,1\" --signs \"------\" --n 6").code, 2);
  EXPECT_EQ(run("nosuchcommand").code, 2);
  EXPECT_EQ(run("weights --config /nonexistent/law.json --k 1").code, 2);
  // A cross-check tolerance of zero cannot be met by two floating-point engines.
  auto strict = run("weights --dist beta --params a=2,b=3 --k 1..3 --grid 0.2:0.8:4 --check-tol 0");
  EXPECT_EQ(strict.code, 3) << strict.err;
}

TEST(Cli, ConfigFile) {
  const std::string path = temp_path("coin.json");
  {
    std::ofstream out(path);
    out << R"({"kind":"discrete","pmf":[0.5,0.5],"support":[0,1]})";
  }
  auto r = run("weights --config '" + path + "' --signs - --k 1");
  ASSERT_EQ(r.code, 0) << r.err;
  auto rs = rows(r.out);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_DOUBLE_EQ(std::stod(rs[0][2]), 0.5);
  std::remove(path.c_str());
}

TEST(Cli, DeterministicOutput) {
  const std::string a = temp_path("a.csv"), b = temp_path("b.csv");
  const std::string args = "expand --dist normal --f \"0,0,1\" --n 2 --direct 20000 --seed 5 -o ";
  ASSERT_EQ(run(args + "'" + a + "'").code, 0);
  ASSERT_EQ(run(args + "'" + b + "'").code, 0);
  std::string sa = slurp(a), sb = slurp(b);
  EXPECT_FALSE(sa.empty());
  EXPECT_EQ(sa, sb);
  auto w1 = run("weights --dist gamma --params shape=3,scale=1 --h arctan --k 1..3 --grid 0.5:6:12");
  auto w2 = run("weights --dist gamma --params shape=3,scale=1 --h arctan --k 1..3 --grid 0.5:6:12");
  EXPECT_EQ(w1.out, w2.out);
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST(Cli, SeedFromEnvironment) {
  auto r = run("verify --suite lagrange", "COVEXP_SEED=123");
  EXPECT_NE(lines(r.out)[0].find("seed=123"), std::string::npos) << r.out;
  auto flag = run("verify --suite lagrange --seed 9", "COVEXP_SEED=123");
  EXPECT_NE(lines(flag.out)[0].find("seed=9"), std::string::npos);
}
