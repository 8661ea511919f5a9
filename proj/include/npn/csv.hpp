#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace npn::csv {

using Row = std::vector<std::string>;

/// Reads RFC-4180 style CSV: comma separated, double-quoted fields may
/// contain commas and doubled quotes. Blank lines are skipped.
std::vector<Row> read(std::istream& in);

/// Quotes a field when it contains a comma, quote, or newline.
std::string quote(const std::string& field);

void write_row(std::ostream& out, const Row& row);

}  // namespace npn::csv
