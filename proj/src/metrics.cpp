#include "cos2a/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "cos2a/error.hpp"

namespace cos2a {
namespace {

void require_same_shape(const HyperCube& ref, const HyperCube& test) {
    if (ref.height() != test.height() || ref.width() != test.width() || ref.bands() != test.bands()) {
        throw InputError("metric inputs differ in shape: " + std::to_string(ref.bands()) + "x" +
                         std::to_string(ref.height()) + "x" + std::to_string(ref.width()) + " vs " +
                         std::to_string(test.bands()) + "x" + std::to_string(test.height()) + "x" +
                         std::to_string(test.width()));
    }
}

std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

// Valid-region separable filtering of one H x W band (row-major).
Matrix filter_valid(const Eigen::Ref<const Matrix>& img, const std::vector<double>& w) {
    const auto n = static_cast<Index>(w.size());
    const Index oh = img.rows() - n + 1;
    const Index ow = img.cols() - n + 1;
    Matrix rows_pass(img.rows(), ow);
    for (Index y = 0; y < img.rows(); ++y) {
        for (Index x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (Index k = 0; k < n; ++k) acc += w[k] * img(y, x + k);
            rows_pass(y, x) = acc;
        }
    }
    Matrix out(oh, ow);
    for (Index y = 0; y < oh; ++y) {
        for (Index x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (Index k = 0; k < n; ++k) acc += w[k] * rows_pass(y + k, x);
            out(y, x) = acc;
        }
    }
    return out;
}

Matrix band_image(const HyperCube& cube, Index b) {
    Matrix img(cube.height(), cube.width());
    for (Index y = 0; y < cube.height(); ++y) {
        for (Index x = 0; x < cube.width(); ++x) img(y, x) = cube.at(b, y, x);
    }
    return img;
}

} // namespace

void MetricsConfig::validate() const {
    if (!(psnr_cap_db > 0.0)) throw InputError("PSNR cap must be positive");
    if (ssim_window < 1 || ssim_window % 2 == 0) throw InputError("SSIM window must be a positive odd size");
    if (!(ssim_sigma > 0.0)) throw InputError("SSIM sigma must be positive");
    if (!(ssim_k1 > 0.0) || !(ssim_k2 > 0.0)) throw InputError("SSIM constants must be positive");
}

std::vector<double> per_band_psnr(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg) {
    cfg.validate();
    require_same_shape(ref, test);
    const double peak = cfg.peak > 0.0 ? cfg.peak : ref.values().maxCoeff();
    if (!(peak > 0.0)) throw InputError("PSNR needs a positive reference peak; the reference is all zero or negative");
    std::vector<double> out(static_cast<std::size_t>(ref.bands()));
    const double n = static_cast<double>(ref.pixels());
    for (Index b = 0; b < ref.bands(); ++b) {
        const double mse = (ref.values().row(b) - test.values().row(b)).squaredNorm() / n;
        out[b] = mse == 0.0 ? cfg.psnr_cap_db : 10.0 * std::log10(peak * peak / mse);
    }
    return out;
}

double psnr(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg) {
    const auto bands = per_band_psnr(ref, test, cfg);
    double total = 0.0;
    for (double v : bands) total += v;
    return total / static_cast<double>(bands.size());
}

SamResult sam(const HyperCube& ref, const HyperCube& test) {
    require_same_shape(ref, test);
    SamResult result;
    double total = 0.0;
    Index counted = 0;
    for (Index j = 0; j < ref.pixels(); ++j) {
        const auto x = ref.values().col(j);
        const auto y = test.values().col(j);
        const double nx = x.norm();
        const double ny = y.norm();
        if (nx == 0.0 || ny == 0.0) {
            ++result.skipped_pixels;
            continue;
        }
        // Same angle as acos of the clamped cosine, but exact at zero: acos
        // loses about 1e-8 rad to rounding there.
        const double chord = std::min((x / nx - y / ny).norm(), 2.0);
        total += 2.0 * std::asin(0.5 * chord);
        ++counted;
    }
    result.degrees = counted > 0 ? total / static_cast<double>(counted) * 180.0 / std::numbers::pi : 0.0;
    return result;
}

double rmse(const HyperCube& ref, const HyperCube& test) {
    require_same_shape(ref, test);
    return std::sqrt((ref.values() - test.values()).squaredNorm() / static_cast<double>(ref.values().size()));
}

double ssim(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg) {
    cfg.validate();
    require_same_shape(ref, test);
    if (ref.height() < cfg.ssim_window || ref.width() < cfg.ssim_window) {
        throw InputError("image " + std::to_string(ref.height()) + "x" + std::to_string(ref.width()) +
                         " is smaller than the SSIM window " + std::to_string(cfg.ssim_window));
    }
    const double range = cfg.dynamic_range > 0.0 ? cfg.dynamic_range : ref.values().maxCoeff();
    if (!(range > 0.0)) throw InputError("SSIM needs a positive dynamic range");
    const double c1 = (cfg.ssim_k1 * range) * (cfg.ssim_k1 * range);
    const double c2 = (cfg.ssim_k2 * range) * (cfg.ssim_k2 * range);
    const auto w = gaussian_taps(cfg.ssim_window, cfg.ssim_sigma);

    double total = 0.0;
    for (Index b = 0; b < ref.bands(); ++b) {
        const Matrix x = band_image(ref, b);
        const Matrix y = band_image(test, b);
        const Matrix mx = filter_valid(x, w);
        const Matrix my = filter_valid(y, w);
        const Matrix sxx = filter_valid(x.cwiseProduct(x), w) - mx.cwiseProduct(mx);
        const Matrix syy = filter_valid(y.cwiseProduct(y), w) - my.cwiseProduct(my);
        const Matrix sxy = filter_valid(x.cwiseProduct(y), w) - mx.cwiseProduct(my);
        const Matrix num = (2.0 * mx.cwiseProduct(my).array() + c1) * (2.0 * sxy.array() + c2);
        const Matrix den = (mx.cwiseProduct(mx).array() + my.cwiseProduct(my).array() + c1) *
                           (sxx.array() + syy.array() + c2);
        total += num.cwiseQuotient(den).mean();
    }
    return total / static_cast<double>(ref.bands());
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["psnr_db"] = psnr_db;
    j["sam_deg"] = sam_deg;
    j["rmse"] = rmse;
    j["ssim"] = ssim;
    j["per_band_psnr"] = per_band_psnr;
    j["skipped_pixels"] = skipped_pixels;
    j["runtime_s"] = runtime_s;
    return j.dump(2) + "\n";
}

MetricsReport evaluate(const HyperCube& ref, const HyperCube& test, const MetricsConfig& cfg, double runtime_s) {
    MetricsReport r;
    r.per_band_psnr = per_band_psnr(ref, test, cfg);
    for (double v : r.per_band_psnr) r.psnr_db += v;
    r.psnr_db /= static_cast<double>(r.per_band_psnr.size());
    const SamResult s = sam(ref, test);
    r.sam_deg = s.degrees;
    r.skipped_pixels = s.skipped_pixels;
    r.rmse = rmse(ref, test);
    r.ssim = ssim(ref, test, cfg);
    r.runtime_s = runtime_s;
    return r;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write metrics report " + path.string());
    out << report.to_json();
}

} // namespace cos2a
