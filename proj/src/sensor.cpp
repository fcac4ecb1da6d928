#include "cos2a/sensor.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cos2a/error.hpp"

namespace cos2a {
namespace {

Matrix band_as_grid(const BandMatrix& values, Index band, Index height, Index width) {
    Matrix grid(height, width);
    for (Index y = 0; y < height; ++y) {
        for (Index x = 0; x < width; ++x) grid(y, x) = values(band, pixel_index(y, x, width));
    }
    return grid;
}

} // namespace

void SensorProfile::validate() const {
    if (bands.empty()) throw InputError("sensor profile '" + name + "' has no bands");
    for (const auto& b : bands) {
        if (!std::isfinite(b.center_nm)) throw InputError("band " + b.name + ": non-finite centre");
        if (!(b.bandwidth_nm > 0.0) || !std::isfinite(b.bandwidth_nm)) {
            throw InputError("band " + b.name + ": bandwidth must be positive");
        }
        if (b.gsd_class != 10 && b.gsd_class != 20 && b.gsd_class != 60) {
            throw InputError("band " + b.name + ": gsd_class must be 10, 20 or 60");
        }
    }
}

SensorProfile sentinel2a_profile() {
    return {"sentinel2a",
            "ESA Sentinel-2A MSI spectral characteristics; B10 (cirrus) excluded",
            {
                {"B1", 442.7, 21.0, 60},
                {"B2", 492.4, 66.0, 10},
                {"B3", 559.8, 36.0, 10},
                {"B4", 664.6, 31.0, 10},
                {"B5", 704.1, 15.0, 20},
                {"B6", 740.5, 15.0, 20},
                {"B7", 782.8, 20.0, 20},
                {"B8", 832.8, 106.0, 10},
                {"B8A", 864.7, 21.0, 20},
                {"B9", 945.1, 20.0, 60},
                {"B11", 1613.7, 91.0, 20},
                {"B12", 2202.4, 175.0, 20},
            }};
}

SensorProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open sensor profile " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    SensorProfile profile;
    try {
        const auto j = nlohmann::json::parse(ss.str());
        profile.name = j.at("name").get<std::string>();
        profile.source = j.value("source", std::string());
        for (const auto& b : j.at("bands")) {
            profile.bands.push_back({b.at("name").get<std::string>(), b.at("center_nm").get<double>(),
                                     b.at("bandwidth_nm").get<double>(), b.at("gsd_class").get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed sensor profile " + path.string() + ": " + e.what());
    }
    profile.validate();
    return profile;
}

void save_profile(const SensorProfile& profile, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["name"] = profile.name;
    j["source"] = profile.source;
    j["bands"] = nlohmann::ordered_json::array();
    for (const auto& b : profile.bands) {
        j["bands"].push_back({{"name", b.name},
                              {"center_nm", b.center_nm},
                              {"bandwidth_nm", b.bandwidth_nm},
                              {"gsd_class", b.gsd_class}});
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write sensor profile " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<double> uniform_wavelengths(double start_nm, double end_nm, Index count) {
    if (count < 1) throw InputError("wavelength grid needs at least one band");
    if (count > 1 && !(end_nm > start_nm)) throw InputError("wavelength grid end must exceed start");
    std::vector<double> wl(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        wl[static_cast<std::size_t>(i)] =
            count == 1 ? start_nm : start_nm + (end_nm - start_nm) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
    return wl;
}

Matrix build_response(const SensorProfile& profile, const std::vector<double>& wavelengths_nm) {
    profile.validate();
    const auto m = static_cast<Index>(profile.bands.size());
    const auto n = static_cast<Index>(wavelengths_nm.size());
    Matrix d = Matrix::Zero(m, n);
    for (Index b = 0; b < m; ++b) {
        const auto& spec = profile.bands[static_cast<std::size_t>(b)];
        const double lo = spec.center_nm - 0.5 * spec.bandwidth_nm;
        const double hi = spec.center_nm + 0.5 * spec.bandwidth_nm;
        Index k = 0;
        for (Index i = 0; i < n; ++i) {
            const double wl = wavelengths_nm[static_cast<std::size_t>(i)];
            if (wl >= lo && wl <= hi) {
                d(b, i) = 1.0;
                ++k;
            }
        }
        if (k == 0) {
            throw InputError("band " + spec.name + " covers no hyperspectral wavelength in [" + std::to_string(lo) +
                             ", " + std::to_string(hi) + "] nm");
        }
        d.row(b) /= static_cast<double>(k);
    }
    return d;
}

Matrix high_res_submatrix(const Matrix& response, const SensorProfile& profile) {
    if (response.rows() != static_cast<Index>(profile.bands.size())) {
        throw InputError("response rows do not match the profile's band count");
    }
    std::vector<Index> rows;
    for (std::size_t i = 0; i < profile.bands.size(); ++i) {
        if (profile.bands[i].gsd_class == 10) rows.push_back(static_cast<Index>(i));
    }
    if (rows.empty()) throw InputError("profile '" + profile.name + "' has no 10 m band");
    Matrix out(static_cast<Index>(rows.size()), response.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = response.row(rows[i]);
    return out;
}

Matrix block_average(const Matrix& image, Index factor) {
    if (factor < 1) throw InputError("block factor must be >= 1");
    const Index h = image.rows();
    const Index w = image.cols();
    const Index oh = (h + factor - 1) / factor;
    const Index ow = (w + factor - 1) / factor;
    Matrix out(oh, ow);
    for (Index by = 0; by < oh; ++by) {
        for (Index bx = 0; bx < ow; ++bx) {
            const Index y0 = by * factor;
            const Index x0 = bx * factor;
            const Index bh = std::min(factor, h - y0);
            const Index bw = std::min(factor, w - x0);
            double sum = 0.0;
            for (Index y = y0; y < y0 + bh; ++y) {
                for (Index x = x0; x < x0 + bw; ++x) sum += image(y, x);
            }
            out(by, bx) = sum / static_cast<double>(bh * bw);
        }
    }
    return out;
}

Matrix block_replicate(const Matrix& image, Index factor, Index out_h, Index out_w) {
    if (factor < 1) throw InputError("block factor must be >= 1");
    if ((out_h + factor - 1) / factor != image.rows() || (out_w + factor - 1) / factor != image.cols()) {
        throw InputError("replication target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " is inconsistent with a " + std::to_string(image.rows()) + "x" +
                         std::to_string(image.cols()) + " grid at factor " + std::to_string(factor));
    }
    Matrix out(out_h, out_w);
    for (Index y = 0; y < out_h; ++y) {
        for (Index x = 0; x < out_w; ++x) out(y, x) = image(y / factor, x / factor);
    }
    return out;
}

MultiResProduct simulate_product(const HyperCube& hsi, const SensorProfile& profile) {
    const Matrix d = build_response(profile, hsi.wavelengths_nm());
    const Index h = hsi.height();
    const Index w = hsi.width();
    BandMatrix values = d * hsi.matrix();
    for (Index b = 0; b < values.rows(); ++b) {
        const Index r = gsd_blur_factor(profile.bands[static_cast<std::size_t>(b)].gsd_class);
        if (r == 1) continue;
        const Matrix degraded = block_replicate(block_average(band_as_grid(values, b, h, w), r), r, h, w);
        for (Index y = 0; y < h; ++y) {
            for (Index x = 0; x < w; ++x) values(b, pixel_index(y, x, w)) = degraded(y, x);
        }
    }
    return MultiResProduct(h, w, profile.bands, std::move(values));
}

bool is_block_constant(const MultiResProduct& product, double tol) {
    const Index h = product.height();
    const Index w = product.width();
    for (Index b = 0; b < static_cast<Index>(product.bands().size()); ++b) {
        const Index r = gsd_blur_factor(product.bands()[static_cast<std::size_t>(b)].gsd_class);
        if (r == 1) continue;
        for (Index y = 0; y < h; ++y) {
            for (Index x = 0; x < w; ++x) {
                const double anchor = product.values()(b, pixel_index(y - y % r, x - x % r, w));
                if (std::abs(product.values()(b, pixel_index(y, x, w)) - anchor) > tol) return false;
            }
        }
    }
    return true;
}

double calibrate_gain(const Vector& a_sub, const Vector& s) {
    if (a_sub.size() != s.size()) throw InputError("calibration vectors differ in length");
    const double aa = a_sub.squaredNorm();
    if (!(aa > 0.0)) throw InputError("calibration reference sub-vector is zero");
    return std::max(0.0, a_sub.dot(s) / aa);
}

std::vector<Index> nearest_band_indices(const std::vector<double>& wavelengths_nm, const SensorProfile& profile) {
    if (wavelengths_nm.empty()) throw InputError("empty wavelength list");
    std::vector<Index> idx;
    for (const auto& b : profile.bands) {
        Index best = 0;
        double best_dist = std::abs(wavelengths_nm[0] - b.center_nm);
        for (std::size_t i = 1; i < wavelengths_nm.size(); ++i) {
            const double dist = std::abs(wavelengths_nm[i] - b.center_nm);
            if (dist < best_dist) {
                best = static_cast<Index>(i);
                best_dist = dist;
            }
        }
        idx.push_back(best);
    }
    return idx;
}

Vector nearest_band_subvector(const Vector& spectrum, const std::vector<double>& wavelengths_nm,
                              const SensorProfile& profile) {
    if (spectrum.size() != static_cast<Index>(wavelengths_nm.size())) {
        throw InputError("spectrum length does not match wavelength list");
    }
    const auto idx = nearest_band_indices(wavelengths_nm, profile);
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = spectrum(idx[i]);
    return out;
}

} // namespace cos2a
