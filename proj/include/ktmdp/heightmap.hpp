#pragma once

#include "ktmdp/state.hpp"

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace ktmdp {

/// Raised while parsing heightmap text; carries the 1-based line number of
/// the offending input line.
class HeightmapParseError : public std::runtime_error {
public:
    HeightmapParseError(int line, const std::string& message)
        : std::runtime_error("heightmap line " + std::to_string(line) + ": " + message),
          line_(line) {}

    int line() const { return line_; }

private:
    int line_;
};

/// Regular elevation grid. Heights are point samples on a lattice whose
/// lower-left sample sits at (x0, y0); the sample in column c, row r counted
/// from the bottom, sits at (x0 + c*cellsize, y0 + r*cellsize). Storage is
/// row-major starting from the top row (maximum y), matching the file layout.
struct Heightmap {
    int ncols = 0;
    int nrows = 0;
    double x0 = 0.0;
    double y0 = 0.0;
    double cellsize = 1.0;
    double nodata = -9999.0;
    std::vector<double> heights;

    /// Height of the sample in column `col`, row `row` counted from the
    /// bottom (row 0 has minimum y).
    double at(int row, int col) const {
        return heights[static_cast<std::size_t>(nrows - 1 - row) * ncols + col];
    }
    double& at(int row, int col) {
        return heights[static_cast<std::size_t>(nrows - 1 - row) * ncols + col];
    }

    bool is_nodata(double v) const { return v == nodata; }

    double x_max() const { return x0 + (ncols - 1) * cellsize; }
    double y_max() const { return y0 + (nrows - 1) * cellsize; }

    bool in_extent(double x, double y) const {
        return x >= x0 && x <= x_max() && y >= y0 && y <= y_max();
    }

    /// Workspace box spanning the sampled extent.
    Box extent_box() const;
};

/// Parses the ASCII grid format: six header lines (ncols, nrows, xllcorner,
/// yllcorner, cellsize, NODATA_value, in that order, keys case-insensitive)
/// followed by nrows whitespace-separated rows of ncols heights, top row
/// first. Throws HeightmapParseError naming the line on malformed headers,
/// wrong row lengths, or non-numeric cells. Grids must be at least 2x2.
Heightmap load_heightmap(const std::string& text);

/// load_heightmap applied to a file's contents. I/O failures raise
/// std::runtime_error naming the path.
Heightmap load_heightmap_file(const std::string& path);

/// Inverse of load_heightmap. Heights are written with 17 significant
/// digits, so a save/load round trip reproduces them bit-exactly.
std::string save_heightmap(const Heightmap& hm);

/// Gradient of the height surface at (x, y): central finite differences at
/// the grid samples (one-sided on the boundary), bilinearly interpolated
/// between the four surrounding samples. Throws std::out_of_range when
/// (x, y) leaves the sampled extent and std::runtime_error when a nodata
/// sample appears in any stencil used.
Eigen::Vector2d height_gradient(const Heightmap& hm, double x, double y);

/// Slope angle atan(|grad h|) at (x, y), clamped to [0, pi/2]. Same error
/// conditions as height_gradient.
double slope_at(const Heightmap& hm, double x, double y);

}  // namespace ktmdp
