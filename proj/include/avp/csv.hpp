#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avp {

// Minimal RFC-4180-style delimited text. Fields containing the delimiter,
// quotes or newlines are quoted on write; quoted fields and doubled quotes
// are handled on read. Delimiter is configurable (default comma).
namespace csv {

std::vector<std::vector<std::string>> read(std::istream& in, char delim = ',');
std::vector<std::vector<std::string>> read_file(const std::string& path, char delim = ',');

std::string format_row(const std::vector<std::string>& fields, char delim = ',');
void write(std::ostream& out, const std::vector<std::vector<std::string>>& rows, char delim = ',');

} // namespace csv
} // namespace avp
