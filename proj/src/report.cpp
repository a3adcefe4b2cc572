#include "gatelab/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "gatelab/error.hpp"

namespace gatelab {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out_ += ',';
        out_ += header[i];
    }
    out_ += '\n';
}

CsvWriter& CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw Error(ErrorKind::InvalidInput, "CSV row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ += ',';
        out_ += cells[i];
    }
    out_ += '\n';
    ++rows_;
    return *this;
}

std::string cell(double v) { return format_double(v); }
std::string cell(long long v) { return std::to_string(v); }
std::string cell(int v) { return std::to_string(v); }
std::string cell(std::string_view v) {
    if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
    std::string q = "\"";
    for (char c : v) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

namespace {

constexpr double kWidth = 720, kHeight = 360;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
}

std::string tick(double v) {
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

struct Frame {
    double ymin, ymax;
    double y(double v) const {
        const double span = ymax - ymin;
        return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - ymin) / span);
    }
};

Frame frame_for(const std::vector<Series>& series, bool include_zero) {
    double lo = include_zero ? 0.0 : INFINITY, hi = include_zero ? 0.0 : -INFINITY;
    for (const auto& s : series)
        for (double v : s.values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    return {lo - (include_zero && lo == 0.0 ? 0.0 : pad), hi + pad};
}

void open_svg(std::ostringstream& os, std::string_view title, std::string_view x_label,
              std::string_view y_label, const Frame& f) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << escape(title) << "</text>\n";
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kTop, y1 = kHeight - kBottom;
    os << "<line x1=\"" << x0 << "\" y1=\"" << y1 << "\" x2=\"" << x1 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = f.ymin + (f.ymax - f.ymin) * i / 4.0;
        os << "<text x=\"" << x0 - 6 << "\" y=\"" << num(f.y(v) + 4)
           << "\" text-anchor=\"end\">" << tick(v) << "</text>\n";
    }
    os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (y0 + y1) / 2 << ")\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& os, const std::vector<Series>& series) {
    double y = kTop + 10;
    for (const auto& s : series) {
        const double x = kWidth - kRight + 12;
        os << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
           << s.color << "\"/>\n";
        os << "<text x=\"" << x + 16 << "\" y=\"" << y << "\">" << escape(s.name) << "</text>\n";
        y += 16;
    }
}

} // namespace

std::string svg_bar_chart(std::string_view title, const std::vector<Series>& series,
                          std::string_view x_label, std::string_view y_label) {
    std::ostringstream os;
    const Frame f = frame_for(series, true);
    open_svg(os, title, x_label, y_label, f);
    std::size_t groups = 0;
    for (const auto& s : series) groups = std::max(groups, s.values.size());
    const double plot_w = kWidth - kLeft - kRight;
    const double group_w = groups ? plot_w / static_cast<double>(groups) : plot_w;
    const double bar_w = group_w / static_cast<double>(series.size() + 1);
    for (std::size_t si = 0; si < series.size(); ++si) {
        for (std::size_t g = 0; g < series[si].values.size(); ++g) {
            const double v = series[si].values[g];
            if (!std::isfinite(v)) continue;
            const double x = kLeft + group_w * g + bar_w * (si + 0.5);
            const double ya = f.y(std::max(v, 0.0)), yb = f.y(std::min(v, 0.0));
            os << "<rect x=\"" << num(x) << "\" y=\"" << num(ya) << "\" width=\"" << num(bar_w)
               << "\" height=\"" << num(std::max(yb - ya, 0.0)) << "\" fill=\"" << series[si].color
               << "\"/>\n";
        }
    }
    legend(os, series);
    os << "</svg>\n";
    return os.str();
}

std::string svg_line_chart(std::string_view title, const std::vector<double>& x,
                           const std::vector<Series>& series, std::string_view x_label,
                           std::string_view y_label) {
    std::ostringstream os;
    const Frame f = frame_for(series, false);
    open_svg(os, title, x_label, y_label, f);
    double xmin = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
    double xmax = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    const double plot_w = kWidth - kLeft - kRight;
    auto px = [&](double v) { return kLeft + plot_w * (v - xmin) / (xmax - xmin); };
    for (std::size_t i = 0; i < x.size(); ++i)
        os << "<text x=\"" << num(px(x[i])) << "\" y=\"" << kHeight - kBottom + 14
           << "\" text-anchor=\"middle\">" << tick(x[i]) << "</text>\n";
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << s.color << "\" points=\"";
        for (std::size_t i = 0; i < std::min(x.size(), s.values.size()); ++i) {
            if (i) os << ' ';
            os << num(px(x[i])) << ',' << num(f.y(s.values[i]));
        }
        os << "\"/>\n";
    }
    legend(os, series);
    os << "</svg>\n";
    return os.str();
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::IOError, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::IOError, "cannot open '" + path.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw Error(ErrorKind::IOError, "write to '" + path.string() + "' failed");
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::IOError, "cannot open '" + path.string() + "'");
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

} // namespace gatelab
