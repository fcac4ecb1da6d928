#include "cos2a/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cos2a/error.hpp"
#include "cos2a/sensor.hpp"

namespace cos2a {
namespace {

Vector gaussian_kernel(double sigma) {
    const auto radius = static_cast<Index>(std::ceil(3.0 * sigma));
    Vector k(2 * radius + 1);
    for (Index i = -radius; i <= radius; ++i) {
        k(i + radius) = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    }
    return k;
}

// Separable Gaussian smoothing with the kernel renormalised at the borders.
Matrix smooth_field(const Matrix& field, double sigma) {
    const Vector k = gaussian_kernel(sigma);
    const Index radius = (k.size() - 1) / 2;
    const Index h = field.rows();
    const Index w = field.cols();

    Matrix tmp(h, w);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            double sum = 0.0;
            double weight = 0.0;
            for (Index d = -radius; d <= radius; ++d) {
                const Index xx = x + d;
                if (xx < 0 || xx >= w) continue;
                sum += k(d + radius) * field(y, xx);
                weight += k(d + radius);
            }
            tmp(y, x) = sum / weight;
        }
    }
    Matrix out(h, w);
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            double sum = 0.0;
            double weight = 0.0;
            for (Index d = -radius; d <= radius; ++d) {
                const Index yy = y + d;
                if (yy < 0 || yy >= h) continue;
                sum += k(d + radius) * tmp(yy, x);
                weight += k(d + radius);
            }
            out(y, x) = sum / weight;
        }
    }
    return out;
}

Vector synth_endmember(Index bands, double smoothness, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> bump_count(3, 6);
    std::uniform_real_distribution<double> center(0.0, static_cast<double>(bands - 1));
    std::uniform_real_distribution<double> width(0.5 * smoothness, 2.0 * smoothness);
    std::uniform_real_distribution<double> amplitude(0.2, 1.0);
    std::uniform_real_distribution<double> offset(0.05, 0.2);

    Vector spectrum = Vector::Constant(bands, offset(rng));
    const int n = bump_count(rng);
    for (int b = 0; b < n; ++b) {
        const double c = center(rng);
        const double s = width(rng);
        const double a = amplitude(rng);
        for (Index i = 0; i < bands; ++i) {
            const double t = (static_cast<double>(i) - c) / s;
            spectrum(i) += a * std::exp(-0.5 * t * t);
        }
    }
    const double lo = spectrum.minCoeff();
    const double hi = spectrum.maxCoeff();
    if (hi - lo <= 0.0) return Vector::Constant(bands, 0.5);
    return (0.05 + 0.9 * (spectrum.array() - lo) / (hi - lo)).matrix();
}

} // namespace

void Factorization::validate() const {
    if (endmembers.cols() != abundances.rows()) throw InputError("factorization inner dimensions disagree");
    if (!endmembers.allFinite() || !abundances.allFinite()) throw InputError("factorization has non-finite entries");
    if ((endmembers.array() < 0.0).any() || (abundances.array() < 0.0).any()) {
        throw InputError("factorization has negative entries");
    }
}

void SceneSpec::validate() const {
    if (height <= 0 || width <= 0) throw InputError("scene dimensions must be positive");
    if (n_endmembers < 1) throw InputError("scene needs at least one endmember");
    if (bands < n_endmembers) throw InputError("scene needs bands >= endmembers");
    if (height * width < n_endmembers) throw InputError("scene needs pixels >= endmembers");
    if (!(smoothness > 0.0) || !(spatial_scale > 0.0)) throw InputError("scene length scales must be positive");
    if (!(noise_sigma >= 0.0)) throw InputError("noise sigma must be non-negative");
}

Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const Index n = spec.n_endmembers;
    const Index pixels = spec.height * spec.width;

    Matrix a(spec.bands, n);
    for (Index i = 0; i < n; ++i) a.col(i) = synth_endmember(spec.bands, spec.smoothness, rng);

    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix logits(n, pixels);
    for (Index i = 0; i < n; ++i) {
        Matrix noise(spec.height, spec.width);
        for (Index y = 0; y < spec.height; ++y) {
            for (Index x = 0; x < spec.width; ++x) noise(y, x) = normal(rng);
        }
        Matrix field = smooth_field(noise, spec.spatial_scale);
        const double mean = field.mean();
        const double sd = std::sqrt((field.array() - mean).square().mean());
        field.array() -= mean;
        if (sd > 0.0) field /= sd;
        for (Index y = 0; y < spec.height; ++y) {
            for (Index x = 0; x < spec.width; ++x) {
                logits(i, pixel_index(y, x, spec.width)) = spec.sharpness * field(y, x);
            }
        }
    }

    Matrix s(n, pixels);
    for (Index j = 0; j < pixels; ++j) {
        const double top = logits.col(j).maxCoeff();
        Vector e = (logits.col(j).array() - top).exp().matrix();
        s.col(j) = e / e.sum();
    }

    std::vector<Index> pure;
    if (spec.pure_pixel) {
        std::uniform_int_distribution<Index> pick(0, pixels - 1);
        while (static_cast<Index>(pure.size()) < n) {
            const Index j = pick(rng);
            if (std::find(pure.begin(), pure.end(), j) == pure.end()) pure.push_back(j);
        }
        for (Index i = 0; i < n; ++i) {
            s.col(pure[static_cast<std::size_t>(i)]).setZero();
            s(i, pure[static_cast<std::size_t>(i)]) = 1.0;
        }
    }

    Matrix y = a * s;
    if (spec.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma);
        for (Index j = 0; j < y.cols(); ++j) {
            for (Index b = 0; b < y.rows(); ++b) y(b, j) += noise(rng);
        }
    }

    auto wl = uniform_wavelengths(spec.wavelength_start_nm, spec.wavelength_end_nm, spec.bands);
    return Scene{HyperCube::from_matrix(spec.height, spec.width, std::move(wl), y), Factorization{a, s},
                 std::move(pure)};
}

} // namespace cos2a
