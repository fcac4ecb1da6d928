#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cos2a {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// bands x pixels, band-sequential: element (b, y, x) sits at b*H*W + y*W + x.
using BandMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Pixels are indexed row-major over the grid (j = y*W + x) everywhere except
// inside the blur operator, which documents its own block-major ordering.
inline Index pixel_index(Index y, Index x, Index width) { return y * width + x; }

struct BandSpec {
    std::string name;
    double center_nm = 0.0;
    double bandwidth_nm = 0.0;
    int gsd_class = 10; // metres: 10, 20 or 60

    bool operator==(const BandSpec&) const = default;
};

// Reflectance cube. Immutable after construction; the constructor enforces
// finiteness, matching sizes and strictly increasing wavelengths.
class HyperCube {
public:
    HyperCube(Index height, Index width, std::vector<double> wavelengths_nm, BandMatrix values);

    // Convenience for solver output (column-major bands x pixels).
    static HyperCube from_matrix(Index height, Index width, std::vector<double> wavelengths_nm,
                                 const Matrix& values);

    Index height() const { return height_; }
    Index width() const { return width_; }
    Index bands() const { return values_.rows(); }
    Index pixels() const { return height_ * width_; }
    const std::vector<double>& wavelengths_nm() const { return wavelengths_; }
    const BandMatrix& values() const { return values_; }

    double at(Index band, Index y, Index x) const { return values_(band, pixel_index(y, x, width_)); }

    // Column-major copy, the layout the solvers work in.
    Matrix matrix() const { return values_; }

    bool operator==(const HyperCube& other) const;

private:
    Index height_;
    Index width_;
    std::vector<double> wavelengths_;
    BandMatrix values_;
};

// Multi-resolution multispectral product with coarse bands stored replicated
// onto the finest grid.
class MultiResProduct {
public:
    MultiResProduct(Index height, Index width, std::vector<BandSpec> bands, BandMatrix values);

    Index height() const { return height_; }
    Index width() const { return width_; }
    Index pixels() const { return height_ * width_; }
    const std::vector<BandSpec>& bands() const { return bands_; }
    const BandMatrix& values() const { return values_; }

    // Rows of the finest-GSD (10 m) bands in band-table order.
    std::vector<Index> high_res_rows() const;
    Matrix high_res_view() const;

    bool operator==(const MultiResProduct& other) const;

private:
    Index height_;
    Index width_;
    std::vector<BandSpec> bands_;
    BandMatrix values_;
};

// Cube file: one JSON header line then f32 little-endian band-sequential data.
HyperCube read_cube(const std::filesystem::path& path);
void write_cube(const HyperCube& cube, const std::filesystem::path& path);

// Product = cube file (wavelengths = band centres) + "<path>.bands.json".
std::filesystem::path band_table_path(const std::filesystem::path& cube_path);
MultiResProduct read_product(const std::filesystem::path& path);
void write_product(const MultiResProduct& product, const std::filesystem::path& path);

// Rectangular CSV of reals, written at 17 significant digits.
Matrix read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const Matrix& m, const std::filesystem::path& path);
std::string format_matrix_csv(const Matrix& m);
Matrix parse_matrix_csv(const std::string& text);

} // namespace cos2a
