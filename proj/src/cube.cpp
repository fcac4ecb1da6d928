#include "cos2a/cube.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cos2a/error.hpp"

namespace cos2a {
namespace {

constexpr const char* kMagic = "cos2a-cube";
constexpr int kVersion = 1;
constexpr std::size_t kMaxHeaderBytes = 64u << 20;

void check_wavelengths(const std::vector<double>& wl, Index bands) {
    if (static_cast<Index>(wl.size()) != bands) {
        throw InputError("wavelength count " + std::to_string(wl.size()) + " does not match " +
                         std::to_string(bands) + " bands");
    }
    for (std::size_t i = 0; i < wl.size(); ++i) {
        if (!std::isfinite(wl[i])) throw InputError("non-finite wavelength");
        if (i > 0 && !(wl[i] > wl[i - 1])) throw InputError("wavelengths must be strictly increasing");
    }
}

void check_finite(const BandMatrix& values) {
    if (!values.allFinite()) throw InputError("cube contains non-finite values");
}

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

std::string read_header_line(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    char c;
    while (in.get(c)) {
        if (c == '\n') return line;
        line.push_back(c);
        if (line.size() > kMaxHeaderBytes) break;
    }
    throw InputError("malformed header in " + path.string() + ": no terminating newline");
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed " + what + ": " + e.what());
    }
}

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& what) {
    if (!j.contains(key)) throw InputError("malformed " + what + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InputError("malformed " + what + ": bad type for field '" + key + "'");
    }
}

void write_raw(std::ofstream& out, const BandMatrix& values) {
    std::vector<std::uint32_t> buf(static_cast<std::size_t>(values.size()));
    const double* src = values.data();
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const float f = static_cast<float>(src[i]);
        if (!std::isfinite(f)) throw InputError("value not representable as finite f32");
        buf[i] = to_le(std::bit_cast<std::uint32_t>(f));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

} // namespace

HyperCube::HyperCube(Index height, Index width, std::vector<double> wavelengths_nm, BandMatrix values)
    : height_(height), width_(width), wavelengths_(std::move(wavelengths_nm)), values_(std::move(values)) {
    if (height_ <= 0 || width_ <= 0) throw InputError("cube dimensions must be positive");
    if (values_.rows() <= 0) throw InputError("cube must have at least one band");
    if (values_.cols() != height_ * width_) {
        throw InputError("cube has " + std::to_string(values_.cols()) + " pixels, expected " +
                         std::to_string(height_ * width_));
    }
    check_wavelengths(wavelengths_, values_.rows());
    check_finite(values_);
}

HyperCube HyperCube::from_matrix(Index height, Index width, std::vector<double> wavelengths_nm,
                                 const Matrix& values) {
    return HyperCube(height, width, std::move(wavelengths_nm), BandMatrix(values));
}

bool HyperCube::operator==(const HyperCube& other) const {
    return height_ == other.height_ && width_ == other.width_ && wavelengths_ == other.wavelengths_ &&
           values_.rows() == other.values_.rows() && values_ == other.values_;
}

MultiResProduct::MultiResProduct(Index height, Index width, std::vector<BandSpec> bands, BandMatrix values)
    : height_(height), width_(width), bands_(std::move(bands)), values_(std::move(values)) {
    if (height_ <= 0 || width_ <= 0) throw InputError("product dimensions must be positive");
    if (static_cast<Index>(bands_.size()) != values_.rows()) {
        throw InputError("band table has " + std::to_string(bands_.size()) + " entries, data has " +
                         std::to_string(values_.rows()) + " bands");
    }
    if (values_.cols() != height_ * width_) throw InputError("product pixel count mismatch");
    for (const auto& b : bands_) {
        if (b.gsd_class != 10 && b.gsd_class != 20 && b.gsd_class != 60) {
            throw InputError("band " + b.name + ": gsd_class must be 10, 20 or 60");
        }
    }
    check_finite(values_);
}

std::vector<Index> MultiResProduct::high_res_rows() const {
    std::vector<Index> rows;
    for (std::size_t i = 0; i < bands_.size(); ++i) {
        if (bands_[i].gsd_class == 10) rows.push_back(static_cast<Index>(i));
    }
    return rows;
}

Matrix MultiResProduct::high_res_view() const {
    const auto rows = high_res_rows();
    if (rows.empty()) throw InputError("product has no 10 m bands");
    Matrix out(static_cast<Index>(rows.size()), values_.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = values_.row(rows[i]);
    return out;
}

bool MultiResProduct::operator==(const MultiResProduct& other) const {
    return height_ == other.height_ && width_ == other.width_ && bands_ == other.bands_ &&
           values_.rows() == other.values_.rows() && values_ == other.values_;
}

HyperCube read_cube(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open cube file " + path.string());

    const std::string what = "cube header in " + path.string();
    const auto header = parse_json(read_header_line(in, path), what);
    if (!header.is_object()) throw InputError("malformed " + what + ": not a JSON object");
    if (field<std::string>(header, "magic", what) != kMagic) throw InputError("malformed " + what + ": bad magic");
    if (field<int>(header, "version", what) != kVersion) throw InputError("unsupported cube version in " + path.string());
    if (field<std::string>(header, "dtype", what) != "f32le") throw InputError("unsupported dtype in " + path.string());
    if (field<std::string>(header, "interleave", what) != "bsq") {
        throw InputError("unsupported interleave in " + path.string());
    }
    const auto height = field<std::int64_t>(header, "height", what);
    const auto width = field<std::int64_t>(header, "width", what);
    const auto bands = field<std::int64_t>(header, "bands", what);
    auto wavelengths = field<std::vector<double>>(header, "wavelengths_nm", what);
    if (height <= 0 || width <= 0 || bands <= 0) throw InputError("malformed " + what + ": non-positive size");

    const auto count = static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
                       static_cast<std::size_t>(bands);
    const auto payload_start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto payload_bytes = static_cast<std::size_t>(in.tellg() - payload_start);
    in.seekg(payload_start);
    if (payload_bytes != count * 4) {
        throw InputError("size mismatch in " + path.string() + ": header declares " + std::to_string(count * 4) +
                         " payload bytes, file holds " + std::to_string(payload_bytes));
    }

    std::vector<std::uint32_t> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count * 4));
    if (!in) throw InputError("short read in " + path.string());

    BandMatrix values(bands, height * width);
    double* dst = values.data();
    for (std::size_t i = 0; i < count; ++i) {
        const float f = std::bit_cast<float>(to_le(raw[i]));
        if (!std::isfinite(f)) throw InputError("non-finite payload value in " + path.string());
        dst[i] = f;
    }
    return HyperCube(height, width, std::move(wavelengths), std::move(values));
}

void write_cube(const HyperCube& cube, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["magic"] = kMagic;
    header["version"] = kVersion;
    header["height"] = cube.height();
    header["width"] = cube.width();
    header["bands"] = cube.bands();
    header["dtype"] = "f32le";
    header["interleave"] = "bsq";
    header["wavelengths_nm"] = cube.wavelengths_nm();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write cube file " + path.string());
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    write_raw(out, cube.values());
    if (!out) throw InputError("write failed for " + path.string());
}

std::filesystem::path band_table_path(const std::filesystem::path& cube_path) {
    return std::filesystem::path(cube_path.string() + ".bands.json");
}

MultiResProduct read_product(const std::filesystem::path& path) {
    const HyperCube cube = read_cube(path);
    const auto table_path = band_table_path(path);
    std::ifstream in(table_path);
    if (!in) throw InputError("cannot open band table " + table_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string what = "band table " + table_path.string();
    const auto table = parse_json(ss.str(), what);
    if (!table.is_array()) throw InputError("malformed " + what + ": expected array");

    std::vector<BandSpec> bands;
    for (const auto& entry : table) {
        bands.push_back({field<std::string>(entry, "name", what), field<double>(entry, "center_nm", what),
                         field<double>(entry, "bandwidth_nm", what), field<int>(entry, "gsd_class", what)});
    }
    return MultiResProduct(cube.height(), cube.width(), std::move(bands), cube.values());
}

void write_product(const MultiResProduct& product, const std::filesystem::path& path) {
    std::vector<double> centers;
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const auto& b : product.bands()) {
        centers.push_back(b.center_nm);
        table.push_back({{"name", b.name},
                         {"center_nm", b.center_nm},
                         {"bandwidth_nm", b.bandwidth_nm},
                         {"gsd_class", b.gsd_class}});
    }
    // The cube invariant requires ascending wavelengths, so products are
    // stored with their bands in ascending centre order.
    write_cube(HyperCube(product.height(), product.width(), std::move(centers), product.values()), path);

    std::ofstream out(band_table_path(path), std::ios::trunc);
    if (!out) throw InputError("cannot write band table for " + path.string());
    out << table.dump(2) << "\n";
}

std::string format_matrix_csv(const Matrix& m) {
    std::string out;
    char buf[32];
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (!std::isfinite(m(i, j))) throw InputError("matrix contains non-finite values");
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            if (j > 0) out.push_back(',');
            out += buf;
        }
        out.push_back('\n');
    }
    return out;
}

Matrix parse_matrix_csv(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            const auto first = cell.find_first_not_of(" \t");
            const auto last = cell.find_last_not_of(" \t");
            cell = first == std::string::npos ? std::string() : cell.substr(first, last - first + 1);
            double v = 0.0;
            const char* begin = cell.data();
            const char* end = begin + cell.size();
            if (!cell.empty() && *begin == '+') ++begin;
            const auto [ptr, ec] = std::from_chars(begin, end, v);
            if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
                throw InputError("non-numeric CSV cell '" + cell + "' on line " + std::to_string(line_no));
            }
            row.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InputError("ragged CSV: line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                             " cells, expected " + std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open CSV file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_matrix_csv(ss.str());
}

void write_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
    const std::string text = format_matrix_csv(m);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write CSV file " + path.string());
    out << text;
    if (!out) throw InputError("write failed for " + path.string());
}

} // namespace cos2a
