#include "ktmdp/heightmap.hpp"

#include "ktmdp/format.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ktmdp {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Parses one whitespace-delimited token as a double; rejects trailing
/// garbage and non-finite values.
double parse_number(const std::string& token, int line, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || token.empty()) {
        throw HeightmapParseError(line, "non-numeric " + what + " '" + token + "'");
    }
    if (!std::isfinite(v)) {
        throw HeightmapParseError(line, "non-finite " + what + " '" + token + "'");
    }
    return v;
}

/// Reads one "key value" header line, insisting on the expected key.
double header_value(std::istream& in, int& line, const std::string& expected_key) {
    std::string text;
    if (!std::getline(in, text)) {
        throw HeightmapParseError(line + 1, "missing header line '" + expected_key + " <value>'");
    }
    ++line;
    std::istringstream ls(text);
    std::string key, value, extra;
    ls >> key >> value;
    if (lower(key) != lower(expected_key) || value.empty()) {
        throw HeightmapParseError(line, "expected '" + expected_key + " <value>', got '" + text + "'");
    }
    if (ls >> extra) {
        throw HeightmapParseError(line, "trailing content after '" + expected_key + "' value");
    }
    return parse_number(value, line, expected_key + " value");
}

int header_int(std::istream& in, int& line, const std::string& key, int min_value) {
    const double v = header_value(in, line, key);
    const int n = static_cast<int>(v);
    if (static_cast<double>(n) != v || n < min_value) {
        throw HeightmapParseError(line, key + " must be an integer >= " + std::to_string(min_value));
    }
    return n;
}

/// Finite-difference gradient at the sample (row from bottom, col). Uses
/// central differences in the interior, one-sided on the boundary, and
/// rejects nodata in the sample or any of its axis neighbors.
Eigen::Vector2d node_gradient(const Heightmap& hm, int row, int col) {
    auto value = [&](int r, int c) {
        const double v = hm.at(r, c);
        if (hm.is_nodata(v)) {
            throw std::runtime_error("heightmap has a nodata sample near row " + std::to_string(r) +
                                     ", col " + std::to_string(c) + "; slope is undefined there");
        }
        return v;
    };

    const double inv = 1.0 / hm.cellsize;
    double dx;
    if (col == 0) {
        dx = (value(row, 1) - value(row, 0)) * inv;
    } else if (col == hm.ncols - 1) {
        dx = (value(row, col) - value(row, col - 1)) * inv;
    } else {
        dx = (value(row, col + 1) - value(row, col - 1)) * (0.5 * inv);
    }

    double dy;
    if (row == 0) {
        dy = (value(1, col) - value(0, col)) * inv;
    } else if (row == hm.nrows - 1) {
        dy = (value(row, col) - value(row - 1, col)) * inv;
    } else {
        dy = (value(row + 1, col) - value(row - 1, col)) * (0.5 * inv);
    }

    (void)value(row, col);
    return {dx, dy};
}

}  // namespace

Box Heightmap::extent_box() const {
    Box box;
    box.lo = StateVector(2);
    box.hi = StateVector(2);
    box.lo << x0, y0;
    box.hi << x_max(), y_max();
    return box;
}

Heightmap load_heightmap(const std::string& text) {
    std::istringstream in(text);
    int line = 0;

    Heightmap hm;
    hm.ncols = header_int(in, line, "ncols", 2);
    hm.nrows = header_int(in, line, "nrows", 2);
    hm.x0 = header_value(in, line, "xllcorner");
    hm.y0 = header_value(in, line, "yllcorner");
    hm.cellsize = header_value(in, line, "cellsize");
    if (hm.cellsize <= 0.0) {
        throw HeightmapParseError(line, "cellsize must be positive");
    }
    hm.nodata = header_value(in, line, "NODATA_value");

    hm.heights.resize(static_cast<std::size_t>(hm.nrows) * hm.ncols);
    int rows_read = 0;
    std::string row_text;
    while (std::getline(in, row_text)) {
        ++line;
        std::istringstream ls(row_text);
        std::string token;
        int cols_read = 0;
        while (ls >> token) {
            if (rows_read == hm.nrows) {
                throw HeightmapParseError(line, "extra data after row " + std::to_string(hm.nrows));
            }
            if (cols_read == hm.ncols) {
                throw HeightmapParseError(
                    line, "row " + std::to_string(rows_read + 1) + " has more than " +
                              std::to_string(hm.ncols) + " columns");
            }
            double v = parse_number(token, line, "height cell");
            hm.heights[static_cast<std::size_t>(rows_read) * hm.ncols + cols_read] = v;
            ++cols_read;
        }
        if (cols_read == 0) continue;  // blank line
        if (cols_read != hm.ncols) {
            throw HeightmapParseError(line, "row " + std::to_string(rows_read + 1) + " has " +
                                                std::to_string(cols_read) + " columns, expected " +
                                                std::to_string(hm.ncols));
        }
        ++rows_read;
    }
    if (rows_read != hm.nrows) {
        throw HeightmapParseError(line + 1, "expected " + std::to_string(hm.nrows) +
                                                " data rows, got " + std::to_string(rows_read));
    }
    return hm;
}

Heightmap load_heightmap_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot open heightmap file '" + path + "'");
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return load_heightmap(buf.str());
}

std::string save_heightmap(const Heightmap& hm) {
    std::ostringstream out;
    out << "ncols " << hm.ncols << "\n";
    out << "nrows " << hm.nrows << "\n";
    out << "xllcorner " << format_g17(hm.x0) << "\n";
    out << "yllcorner " << format_g17(hm.y0) << "\n";
    out << "cellsize " << format_g17(hm.cellsize) << "\n";
    out << "NODATA_value " << format_g17(hm.nodata) << "\n";
    for (int top_row = 0; top_row < hm.nrows; ++top_row) {
        for (int col = 0; col < hm.ncols; ++col) {
            if (col) out << ' ';
            out << format_g17(hm.heights[static_cast<std::size_t>(top_row) * hm.ncols + col]);
        }
        out << "\n";
    }
    return out.str();
}

Eigen::Vector2d height_gradient(const Heightmap& hm, double x, double y) {
    if (!hm.in_extent(x, y)) {
        throw std::out_of_range("point (" + format_g17(x) + ", " + format_g17(y) +
                                ") is outside the heightmap extent");
    }
    const double gx = (x - hm.x0) / hm.cellsize;
    const double gy = (y - hm.y0) / hm.cellsize;
    const int c0 = std::clamp(static_cast<int>(std::floor(gx)), 0, hm.ncols - 2);
    const int r0 = std::clamp(static_cast<int>(std::floor(gy)), 0, hm.nrows - 2);
    const double fx = std::clamp(gx - c0, 0.0, 1.0);
    const double fy = std::clamp(gy - r0, 0.0, 1.0);

    const Eigen::Vector2d g00 = node_gradient(hm, r0, c0);
    const Eigen::Vector2d g01 = node_gradient(hm, r0, c0 + 1);
    const Eigen::Vector2d g10 = node_gradient(hm, r0 + 1, c0);
    const Eigen::Vector2d g11 = node_gradient(hm, r0 + 1, c0 + 1);

    return (1.0 - fy) * ((1.0 - fx) * g00 + fx * g01) + fy * ((1.0 - fx) * g10 + fx * g11);
}

double slope_at(const Heightmap& hm, double x, double y) {
    const double slope = std::atan(height_gradient(hm, x, y).norm());
    return std::clamp(slope, 0.0, std::numbers::pi / 2.0);
}

}  // namespace ktmdp
