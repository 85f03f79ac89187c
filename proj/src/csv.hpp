#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace teleplan::csv {

using Row = std::vector<std::string>;

// RFC 4180 reader: quoted fields, doubled quotes, embedded CR/LF. Accepts
// LF or CRLF record separators and an optional UTF-8 BOM. Blank lines are
// skipped.
std::vector<Row> parse(std::string_view text);

// Quotes a field only when it contains a delimiter, quote or line break.
std::string escape(std::string_view field);
std::string format_row(const Row& row);

// Shortest round-trip representation of a double.
std::string format_double(double v);

}  // namespace teleplan::csv
