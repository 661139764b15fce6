#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ionsim/error.hpp"

namespace ionsim::csv {

/// Fixed-format CSV writer. All numeric formatting goes through snprintf so
/// reruns are byte-identical.
class Writer {
 public:
  explicit Writer(const std::string& path);

  void header(const std::string& line);
  Writer& field(const std::string& s);
  Writer& field(long long v);
  Writer& field(int v) { return field(static_cast<long long>(v)); }
  /// %.*g with enough digits to round-trip a double.
  Writer& field(double v, int precision = 12);
  void end_row();

 private:
  std::ofstream out_;
  bool row_open_ = false;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  double num(std::size_t row, std::size_t col) const;
  long long integer(std::size_t row, std::size_t col) const;
  int column(const std::string& name) const;  // -1 if absent
};

Table read_file(const std::string& path, bool expect_header = true);

std::string format_double(double v, int precision = 12);

}  // namespace ionsim::csv
