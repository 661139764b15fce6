#include "ionsim/csv.hpp"

#include <cstdlib>
#include <sstream>

namespace ionsim::csv {

Writer::Writer(const std::string& path) : out_(path) {
  if (!out_) {
    throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  }
}

void Writer::header(const std::string& line) {
  out_ << line << "\n";
}

Writer& Writer::field(const std::string& s) {
  if (row_open_) out_ << ",";
  out_ << s;
  row_open_ = true;
  return *this;
}

Writer& Writer::field(long long v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld", v);
  return field(std::string(buf));
}

Writer& Writer::field(double v, int precision) {
  return field(format_double(v, precision));
}

void Writer::end_row() {
  out_ << "\n";
  row_open_ = false;
}

std::string format_double(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

Table read_file(const std::string& path, bool expect_header) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open for reading: " + path);
  }
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && expect_header) {
      t.header = split_line(line);
      first = false;
      continue;
    }
    first = false;
    t.rows.push_back(split_line(line));
  }
  return t;
}

double Table::num(std::size_t row, std::size_t col) const {
  const std::string& s = rows.at(row).at(col);
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) {
    throw Error(ErrorCode::IoError, "not a number: '" + s + "'");
  }
  return v;
}

long long Table::integer(std::size_t row, std::size_t col) const {
  return static_cast<long long>(num(row, col));
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace ionsim::csv
