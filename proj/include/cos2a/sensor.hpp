#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cos2a/cube.hpp"

namespace cos2a {

struct SensorProfile {
    std::string name;
    std::string source;
    std::vector<BandSpec> bands;

    // bandwidth > 0, finite centres, gsd classes in {10, 20, 60}.
    void validate() const;
};

// Twelve usable Sentinel-2A MSI bands (cirrus B10 dropped), centres and
// bandwidths from the ESA instrument documentation.
SensorProfile sentinel2a_profile();

SensorProfile load_profile(const std::filesystem::path& path);
void save_profile(const SensorProfile& profile, const std::filesystem::path& path);

// `count` wavelengths evenly spaced over [start_nm, end_nm].
std::vector<double> uniform_wavelengths(double start_nm, double end_nm, Index count);

// Band-averaging response: row b holds 1/k_b on the k_b hyperspectral bands
// with |lambda - centre_b| <= bandwidth_b / 2.
Matrix build_response(const SensorProfile& profile, const std::vector<double>& wavelengths_nm);

// Rows of the 10 m bands, in profile order.
Matrix high_res_submatrix(const Matrix& response, const SensorProfile& profile);

// Mean over each r x r block; edge blocks are truncated to the cells that exist.
Matrix block_average(const Matrix& image, Index factor);
// Nearest-block upsampling onto an out_h x out_w grid; requires
// ceil(out_h / r) == rows and ceil(out_w / r) == cols.
Matrix block_replicate(const Matrix& image, Index factor, Index out_h, Index out_w);

// 10 m -> 1, 20 m -> 2, 60 m -> 6.
inline Index gsd_blur_factor(int gsd_class) { return gsd_class / 10; }

MultiResProduct simulate_product(const HyperCube& hsi, const SensorProfile& profile);

// True when every band is constant on each aligned block of its GSD factor
// (truncated at the grid edges), to within `tol`.
bool is_block_constant(const MultiResProduct& product, double tol = 0.0);

// argmin_{gamma >= 0} 1/2 ||gamma a - s||^2 = max(0, <a, s> / <a, a>).
double calibrate_gain(const Vector& a_sub, const Vector& s);

// For each profile band, the hyperspectral band nearest its centre (ties to
// the lower index).
std::vector<Index> nearest_band_indices(const std::vector<double>& wavelengths_nm, const SensorProfile& profile);
Vector nearest_band_subvector(const Vector& spectrum, const std::vector<double>& wavelengths_nm,
                              const SensorProfile& profile);

} // namespace cos2a
