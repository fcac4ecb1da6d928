#include "cos2a/denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <json.hpp>

#include "cos2a/error.hpp"

namespace cos2a {
namespace {

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
}

// Input shifted by (dy, dx) with zero fill: out(:, y*W + x) = in(:, (y+dy)*W + x+dx).
Matrix shifted(const Matrix& in, Index height, Index width, Index dy, Index dx) {
    Matrix out = Matrix::Zero(in.rows(), in.cols());
    for (Index y = 0; y < height; ++y) {
        const Index sy = y + dy;
        if (sy < 0 || sy >= height) continue;
        for (Index x = 0; x < width; ++x) {
            const Index sx = x + dx;
            if (sx < 0 || sx >= width) continue;
            out.col(pixel_index(y, x, width)) = in.col(pixel_index(sy, sx, width));
        }
    }
    return out;
}

template <class Net, class Fn>
void for_each_layer(Net& net, Fn&& fn) {
    fn(net.input);
    for (std::size_t i = 0; i < net.block_a.size(); ++i) {
        fn(net.block_a[i]);
        fn(net.block_b[i]);
    }
    fn(net.output);
}

} // namespace

void ConvArch::validate() const {
    if (channels < 1 || groups < 1 || blocks < 0 || bands < 1) throw InputError("invalid conv architecture");
    if (channels % groups != 0 || bands % groups != 0) {
        throw InputError("conv architecture: channels (" + std::to_string(channels) + ") and bands (" +
                         std::to_string(bands) + ") must be divisible by groups (" + std::to_string(groups) + ")");
    }
}

ConvLayer::ConvLayer(Index in, Index out, Index g)
    : in_channels(in), out_channels(out), groups(g),
      weight(static_cast<std::size_t>(out * (in / g) * 9), 0.0),
      bias(static_cast<std::size_t>(out), 0.0) {}

Matrix ConvLayer::forward(const Matrix& x, Index height, Index width) const {
    if (x.rows() != in_channels) {
        throw InputError("conv layer expects " + std::to_string(in_channels) + " channels, got " +
                         std::to_string(x.rows()));
    }
    const Index cin = in_channels / groups;
    const Index cout = out_channels / groups;
    Matrix out(out_channels, x.cols());
    for (Index o = 0; o < out_channels; ++o) out.row(o).setConstant(bias[static_cast<std::size_t>(o)]);

    Matrix tap(cout, cin);
    for (Index ky = 0; ky < 3; ++ky) {
        for (Index kx = 0; kx < 3; ++kx) {
            const Matrix in_shift = shifted(x, height, width, ky - 1, kx - 1);
            for (Index g = 0; g < groups; ++g) {
                for (Index o = 0; o < cout; ++o) {
                    for (Index c = 0; c < cin; ++c) {
                        const auto idx = static_cast<std::size_t>((((g * cout + o) * cin + c) * 3 + ky) * 3 + kx);
                        tap(o, c) = weight[idx];
                    }
                }
                out.middleRows(g * cout, cout).noalias() += tap * in_shift.middleRows(g * cin, cin);
            }
        }
    }
    return out;
}

ResidualNet::ResidualNet(const ConvArch& a) : arch(a) {
    arch.validate();
    input = ConvLayer(arch.bands, arch.channels, arch.groups);
    for (Index i = 0; i < arch.blocks; ++i) {
        block_a.emplace_back(arch.channels, arch.channels, arch.groups);
        block_b.emplace_back(arch.channels, arch.channels, arch.groups);
    }
    output = ConvLayer(arch.channels, arch.bands, arch.groups);
}

std::size_t ResidualNet::parameter_count() const {
    std::size_t n = 0;
    for_each_layer(*this, [&](const ConvLayer& l) { n += l.weight.size() + l.bias.size(); });
    return n;
}

Matrix ResidualNet::forward(const Matrix& x, Index height, Index width) const {
    if (x.rows() != arch.bands) {
        throw InputError("conv denoiser built for " + std::to_string(arch.bands) + " bands, input has " +
                         std::to_string(x.rows()));
    }
    Matrix h = input.forward(x, height, width);
    for (std::size_t i = 0; i < block_a.size(); ++i) {
        const Matrix inner = block_a[i].forward(h, height, width).cwiseMax(0.0);
        h += block_b[i].forward(inner, height, width);
    }
    return x + output.forward(h, height, width);
}

ResidualNet load_conv_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open conv weights " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError("conv weights " + path.string() + ": missing header");

    ConvArch arch;
    try {
        const auto j = nlohmann::json::parse(line).at("arch");
        arch.channels = j.at("channels").get<Index>();
        arch.groups = j.at("groups").get<Index>();
        arch.blocks = j.at("blocks").get<Index>();
        arch.bands = j.at("bands").get<Index>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError("conv weights " + path.string() + ": malformed header: " + e.what());
    }
    ResidualNet net(arch);

    const std::size_t expected = net.parameter_count();
    const auto start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg() - start);
    in.seekg(start);
    if (bytes != expected * 4) {
        throw InputError("conv weights " + path.string() + " hold " + std::to_string(bytes / 4) +
                         " values; the declared architecture needs " + std::to_string(expected));
    }
    std::vector<std::uint32_t> raw(expected);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    std::size_t pos = 0;
    auto take = [&](std::vector<double>& dst) {
        for (auto& v : dst) {
            const float f = std::bit_cast<float>(to_le(raw[pos++]));
            if (!std::isfinite(f)) throw InputError("conv weights " + path.string() + ": non-finite value");
            v = f;
        }
    };
    for_each_layer(net, [&](ConvLayer& l) {
        take(l.weight);
        take(l.bias);
    });
    return net;
}

void save_conv_weights(const ResidualNet& net, const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["arch"] = {{"channels", net.arch.channels},
                      {"groups", net.arch.groups},
                      {"blocks", net.arch.blocks},
                      {"bands", net.arch.bands}};
    std::vector<std::uint32_t> raw;
    auto put = [&](const std::vector<double>& src) {
        for (double v : src) raw.push_back(to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v))));
    };
    for_each_layer(net, [&](const ConvLayer& l) {
        put(l.weight);
        put(l.bias);
    });
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write conv weights " + path.string());
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

void DenoiserSpec::validate() const {
    switch (kind) {
    case Kind::identity:
        break;
    case Kind::box:
        if (window < 1 || window % 2 == 0) throw InputError("box denoiser window must be odd and >= 1");
        break;
    case Kind::quadratic:
        if (!(mu >= 0.0)) throw InputError("quadratic denoiser mu must be >= 0");
        break;
    case Kind::conv:
        if (!net) throw InputError("conv denoiser has no weights");
        break;
    }
}

const char* to_string(DenoiserSpec::Kind kind) {
    switch (kind) {
    case DenoiserSpec::Kind::identity: return "identity";
    case DenoiserSpec::Kind::box: return "box";
    case DenoiserSpec::Kind::quadratic: return "quadratic";
    case DenoiserSpec::Kind::conv: return "conv";
    }
    return "unknown";
}

DenoiserSpec::Kind parse_denoiser_kind(const std::string& name) {
    if (name == "identity") return DenoiserSpec::Kind::identity;
    if (name == "box") return DenoiserSpec::Kind::box;
    if (name == "quadratic") return DenoiserSpec::Kind::quadratic;
    if (name == "conv") return DenoiserSpec::Kind::conv;
    throw InputError("unknown denoiser kind '" + name + "'");
}

Matrix box_filter(const Matrix& x, Index height, Index width, Index window) {
    if (x.cols() != height * width) throw InputError("box filter: pixel count does not match grid");
    const Index radius = window / 2;
    Matrix horiz(x.rows(), x.cols());
    for (Index y = 0; y < height; ++y) {
        for (Index xx = 0; xx < width; ++xx) {
            const Index x0 = std::max<Index>(0, xx - radius);
            const Index x1 = std::min(width - 1, xx + radius);
            auto dst = horiz.col(pixel_index(y, xx, width));
            dst.setZero();
            for (Index s = x0; s <= x1; ++s) dst += x.col(pixel_index(y, s, width));
            dst /= static_cast<double>(x1 - x0 + 1);
        }
    }
    Matrix out(x.rows(), x.cols());
    for (Index y = 0; y < height; ++y) {
        const Index y0 = std::max<Index>(0, y - radius);
        const Index y1 = std::min(height - 1, y + radius);
        for (Index xx = 0; xx < width; ++xx) {
            auto dst = out.col(pixel_index(y, xx, width));
            dst.setZero();
            for (Index s = y0; s <= y1; ++s) dst += horiz.col(pixel_index(s, xx, width));
            dst /= static_cast<double>(y1 - y0 + 1);
        }
    }
    return out;
}

Matrix denoise(const Matrix& x, Index height, Index width, const DenoiserSpec& spec, double rho) {
    spec.validate();
    switch (spec.kind) {
    case DenoiserSpec::Kind::identity:
        return x;
    case DenoiserSpec::Kind::box:
        return spec.window == 1 ? x : box_filter(x, height, width, spec.window);
    case DenoiserSpec::Kind::quadratic:
        if (!(rho > 0.0)) throw InputError("quadratic denoiser needs rho > 0");
        if (spec.anchor.rows() != x.rows() || spec.anchor.cols() != x.cols()) {
            throw InputError("quadratic denoiser anchor has the wrong shape");
        }
        return (rho * x + spec.mu * spec.anchor) / (rho + spec.mu);
    case DenoiserSpec::Kind::conv:
        return spec.net->forward(x, height, width);
    }
    return x;
}

} // namespace cos2a
