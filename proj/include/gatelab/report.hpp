#pragma once

// Output plumbing: shortest round-trip number formatting, CSV rows, SVG
// charts and SHA-256 checksums.

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace gatelab {

// Shortest decimal that parses back to the same double ("nan", "inf", "-inf"
// for non-finite values).
std::string format_double(double v);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& row(const std::vector<std::string>& cells);

    // LF line endings, no trailing spaces.
    const std::string& str() const noexcept { return out_; }
    std::size_t rows() const noexcept { return rows_; }

private:
    std::size_t columns_;
    std::size_t rows_ = 0;
    std::string out_;
};

std::string cell(double v);
std::string cell(long long v);
std::string cell(int v);
std::string cell(std::string_view v);

struct Series {
    std::string name;
    std::string color;
    std::vector<double> values;
};

// Grouped bars: one group per x position, one bar per series.
std::string svg_bar_chart(std::string_view title, const std::vector<Series>& series,
                          std::string_view x_label, std::string_view y_label);

// Polylines over shared x values.
std::string svg_line_chart(std::string_view title, const std::vector<double>& x,
                           const std::vector<Series>& series, std::string_view x_label,
                           std::string_view y_label);

std::string sha256_hex(std::string_view bytes);

void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

} // namespace gatelab
