#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cos2a/cube.hpp"

namespace cos2a {

struct MetricsConfig {
    double psnr_cap_db = 100.0;
    double peak = 0.0;          // <= 0: use the reference maximum
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
    double dynamic_range = 0.0; // <= 0: use the reference maximum

    void validate() const;
};

std::vector<double> per_band_psnr(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg = {});
// Band mean of per_band_psnr.
double psnr(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg = {});

struct SamResult {
    double degrees = 0.0;
    Index skipped_pixels = 0; // pixels where either spectrum is zero
};
SamResult sam(const HyperCube& ref, const HyperCube& test);
inline double sam_degrees(const HyperCube& ref, const HyperCube& test) { return sam(ref, test).degrees; }

double rmse(const HyperCube& ref, const HyperCube& test);

// Single-scale SSIM over the valid region of a Gaussian window, band mean.
double ssim(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg = {});

struct MetricsReport {
    double psnr_db = 0.0;
    double sam_deg = 0.0;
    double rmse = 0.0;
    double ssim = 0.0;
    std::vector<double> per_band_psnr;
    Index skipped_pixels = 0;
    double runtime_s = 0.0; // supplied by the caller; evaluate() does not time anything

    std::string to_json() const;
};

MetricsReport evaluate(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg = {},
                       double runtime_s = 0.0);
void write_report(const MetricsReport& report, const std::filesystem::path& path);

} // namespace cos2a
