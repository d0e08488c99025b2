#include "breakscope/csv.hpp"

#include "breakscope/util.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace breakscope {

int CsvTable::col(const std::string& name) const {
    if (auto idx = col_opt(name)) return *idx;
    throw input_error("missing CSV column '" + name + "'");
}

std::optional<int> CsvTable::col_opt(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<int>(it - header.begin());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open CSV file: " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (first) {
            for (auto& f : fields) f = trim(f);
            table.header = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.header.size())
                throw input_error(path + ": row has " + std::to_string(fields.size()) +
                                  " fields, header has " + std::to_string(table.header.size()));
            table.rows.push_back(std::move(fields));
        }
    }
    if (first) throw input_error(path + ": empty file (header row required)");
    return table;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

long to_long(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(trim(s), &pos);
        if (pos != trim(s).size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw input_error("expected integer for " + context + ", got '" + s + "'");
    }
}

double to_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(trim(s), &pos);
        if (pos != trim(s).size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw input_error("expected number for " + context + ", got '" + s + "'");
    }
}

}  // namespace breakscope
