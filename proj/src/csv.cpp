#include "qkdsim/csv.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <sstream>

#include "qkdsim/errors.hpp"

namespace qkdsim::csv {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::string format(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::vector<std::vector<double>> read_numeric(std::istream& in, const std::vector<std::string_view>& columns) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto fields = split(body);
    if (!header_seen) {
      if (fields.size() != columns.size() || !std::equal(fields.begin(), fields.end(), columns.begin())) {
        std::ostringstream msg;
        msg << "line " << line_no << ": expected header '";
        for (std::size_t i = 0; i < columns.size(); ++i) msg << (i ? "," : "") << columns[i];
        msg << "'";
        throw InvalidInput(msg.str());
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != columns.size()) {
      throw InvalidInput("line " + std::to_string(line_no) + ": expected " + std::to_string(columns.size()) +
                         " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
      double v = 0.0;
      const auto f = fields[i];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size()) {
        throw InvalidInput("line " + std::to_string(line_no) + ": column '" + std::string(columns[i]) +
                           "' is not a number: '" + std::string(f) + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw InvalidInput("line " + std::to_string(line_no) + ": empty file, no CSV header");
  return rows;
}

}  // namespace qkdsim::csv
