#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace qkdsim::csv {

/// Shortest decimal text that parses back to the same double.
std::string format(double value);

/// Reads a numeric CSV whose header must list exactly `columns`. Blank lines and lines
/// starting with '#' are skipped. Errors carry the 1-based line number.
std::vector<std::vector<double>> read_numeric(std::istream& in, const std::vector<std::string_view>& columns);

}  // namespace qkdsim::csv
