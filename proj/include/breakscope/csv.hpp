#pragma once

#include <optional>
#include <string>
#include <vector>

namespace breakscope {

/// In-memory CSV table. Parsing is RFC-4180-ish: comma separated, double
/// quotes with "" escapes, no embedded newlines. Header row required.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws input_error when absent.
    int col(const std::string& name) const;
    /// Index of a header column, or nullopt.
    std::optional<int> col_opt(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);
std::vector<std::string> split_csv_line(const std::string& line);

/// Fixed-format double for deterministic artifacts (%.12g).
std::string format_double(double v);

/// Quote a field if it contains a comma, quote or space padding.
std::string csv_field(const std::string& s);

long to_long(const std::string& s, const std::string& context);
double to_double(const std::string& s, const std::string& context);

}  // namespace breakscope
