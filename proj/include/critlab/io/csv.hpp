#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "critlab/errors.hpp"

namespace critlab::io {

/// 17 significant digits: enough to round-trip any double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_cell(double v) { return format_double(v); }
inline std::string format_cell(const std::string& s) { return s; }
inline std::string format_cell(const char* s) { return s; }
template <class T>
  requires std::is_integral_v<T>
std::string format_cell(T v) {
  return std::to_string(v);
}

/// A CSV table: header row, comma-separated, LF line endings. Cells holding
/// a comma or quote are quoted.
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Args>
  void row(const Args&... cells) {
    if (sizeof...(Args) != header_.size()) throw std::logic_error("CSV row width does not match header");
    rows_.push_back({format_cell(cells)...});
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  bool empty() const { return header_.empty(); }

  void write(std::ostream& out) const {
    write_line(out, header_);
    for (const auto& r : rows_) write_line(out, r);
  }

 private:
  static void write_line(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      const std::string& c = cells[i];
      if (c.find_first_of(",\"\n") == std::string::npos) {
        out << c;
        continue;
      }
      out << '"';
      for (char ch : c) out << (ch == '"' ? "\"\"" : std::string(1, ch));
      out << '"';
    }
    out << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Ordered `key=value` lines.
class Summary {
 public:
  void add(const std::string& key, const std::string& value) { items_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, format_double(value)); }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }
  void add(const std::string& key, const char* value) { add(key, std::string(value)); }

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : items_) out << k << "=" << v << '\n';
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

inline void write_file(const std::string& path, const Table& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  t.write(out);
}

}  // namespace critlab::io
