#include "avp/csv.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "avp/errors.hpp"

namespace avp::csv {

std::vector<std::vector<std::string>> read(std::istream& in, char delim) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_started = false;
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty()) {
            in_quotes = true;
            row_started = true;
        } else if (c == delim) {
            end_field();
            row_started = true;
        } else if (c == '\n') {
            if (row_started || !field.empty()) end_row();
        } else if (c == '\r') {
            // swallowed; \r\n handled by the \n branch
        } else {
            field.push_back(c);
            row_started = true;
        }
    }
    if (in_quotes) fail("csv-parse", "unterminated quoted field");
    if (row_started || !field.empty()) end_row();
    return rows;
}

std::vector<std::vector<std::string>> read_file(const std::string& path, char delim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("io", "cannot open " + path);
    return read(in, delim);
}

static bool needs_quoting(const std::string& s, char delim) {
    for (char c : s)
        if (c == delim || c == '"' || c == '\n' || c == '\r') return true;
    return false;
}

std::string format_row(const std::vector<std::string>& fields, char delim) {
    std::ostringstream out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << delim;
        const std::string& f = fields[i];
        if (needs_quoting(f, delim)) {
            out << '"';
            for (char c : f) {
                if (c == '"') out << "\"\"";
                else out << c;
            }
            out << '"';
        } else {
            out << f;
        }
    }
    return out.str();
}

void write(std::ostream& out, const std::vector<std::vector<std::string>>& rows, char delim) {
    for (const auto& row : rows) out << format_row(row, delim) << '\n';
}

} // namespace avp::csv
