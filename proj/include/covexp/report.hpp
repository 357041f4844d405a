#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "covexp/errors.hpp"

namespace covexp {

inline constexpr const char* kVersion = "0.1.0";

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Shortest decimal that round-trips, for metadata such as tolerances.
inline std::string format_short(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : format_double(v);
}

/// Minimal CSV builder: one leading comment line, a header row, then data rows.
class CsvTable {
 public:
  CsvTable(std::string comment, std::vector<std::string> header)
      : comment_(std::move(comment)), header_(std::move(header)) {}

  class Row {
   public:
    explicit Row(CsvTable& t) : t_(t) {}
    Row& operator<<(double v) { return put(format_double(v)); }
    Row& operator<<(int v) { return put(std::to_string(v)); }
    Row& operator<<(long v) { return put(std::to_string(v)); }
    Row& operator<<(bool v) { return put(v ? "true" : "false"); }
    Row& operator<<(const std::string& v) { return put(quote(v)); }
    Row& operator<<(const char* v) { return put(quote(v)); }
    ~Row() { t_.rows_.push_back(std::move(cells_)); }

   private:
    Row& put(std::string s) {
      cells_.push_back(std::move(s));
      return *this;
    }
    static std::string quote(const std::string& s) {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string q = "\"";
      for (char c : s) {
        if (c == '"') q += '"';
        q += c;
      }
      return q + "\"";
    }
    CsvTable& t_;
    std::vector<std::string> cells_;
  };

  Row row() { return Row(*this); }
  std::size_t size() const { return rows_.size(); }

  std::string str() const {
    std::ostringstream os;
    os << "# " << comment_ << "\n";
    join(os, header_);
    for (const auto& r : rows_) join(os, r);
    return os.str();
  }

 private:
  static void join(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << "\n";
  }

  std::string comment_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Writes to a sibling temporary file and renames it over `path`; empty or "-" means stdout.
inline void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.close();
    if (!out) throw ConfigError("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw ConfigError("cannot move output into place at '" + path + "': " + ec.message());
  }
}

}  // namespace covexp
