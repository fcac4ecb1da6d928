#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "cos2a/cube.hpp"

namespace cos2a {

struct ConvArch {
    Index channels = 48;
    Index groups = 4;
    Index blocks = 3;
    Index bands = 172;

    void validate() const;
    bool operator==(const ConvArch&) const = default;
};

// 3x3 grouped convolution with zero padding ("same" output size).
// weight layout: [out][in / groups][3][3], row-major.
struct ConvLayer {
    Index in_channels = 0;
    Index out_channels = 0;
    Index groups = 1;
    std::vector<double> weight;
    std::vector<double> bias;

    ConvLayer() = default;
    ConvLayer(Index in, Index out, Index groups);

    Index weight_count() const { return out_channels * (in_channels / groups) * 9; }
    // x: in_channels x (height*width), pixels row-major.
    Matrix forward(const Matrix& x, Index height, Index width) const;
};

// Residual-in-residual denoiser:
//   h = conv_in(x)
//   repeat `blocks` times: h = h + conv_b(relu(conv_a(h)))
//   out = x + conv_out(h)
struct ResidualNet {
    ConvArch arch;
    ConvLayer input;
    std::vector<ConvLayer> block_a;
    std::vector<ConvLayer> block_b;
    ConvLayer output;

    explicit ResidualNet(const ConvArch& arch); // all weights zero
    std::size_t parameter_count() const;
    Matrix forward(const Matrix& x, Index height, Index width) const;
};

// Weights file: JSON header line {"arch":{"channels","groups","blocks","bands"}}
// then little-endian f32 values in layer order input, (block_a[i], block_b[i])
// for each block, output; each layer stores its weight then its bias.
ResidualNet load_conv_weights(const std::filesystem::path& path);
void save_conv_weights(const ResidualNet& net, const std::filesystem::path& path);

struct DenoiserSpec {
    enum class Kind { identity, box, quadratic, conv };

    Kind kind = Kind::box;
    Index window = 3;         // box: odd window width
    double mu = 0.0;          // quadratic: weight of (mu/2)||Z - anchor||^2
    Matrix anchor;            // quadratic: Z0, bands x pixels
    std::shared_ptr<const ResidualNet> net; // conv

    void validate() const;

    static DenoiserSpec identity() {
        DenoiserSpec s;
        s.kind = Kind::identity;
        return s;
    }
    static DenoiserSpec box(Index w) {
        DenoiserSpec s;
        s.kind = Kind::box;
        s.window = w;
        return s;
    }
    static DenoiserSpec quadratic(double mu, Matrix anchor) {
        DenoiserSpec s;
        s.kind = Kind::quadratic;
        s.mu = mu;
        s.anchor = std::move(anchor);
        return s;
    }
    static DenoiserSpec conv(std::shared_ptr<const ResidualNet> net) {
        DenoiserSpec s;
        s.kind = Kind::conv;
        s.net = std::move(net);
        return s;
    }
};

const char* to_string(DenoiserSpec::Kind kind);
DenoiserSpec::Kind parse_denoiser_kind(const std::string& name);

// Proximal step prox_{DIP/rho}(x) for the configured prior; x is bands x
// (height*width).
Matrix denoise(const Matrix& x, Index height, Index width, const DenoiserSpec& spec, double rho);

// Per-band w x w mean filter, window truncated at the borders.
Matrix box_filter(const Matrix& x, Index height, Index width, Index window);

} // namespace cos2a
