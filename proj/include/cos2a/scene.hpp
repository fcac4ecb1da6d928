#pragma once

#include <cstdint>
#include <vector>

#include "cos2a/cube.hpp"

namespace cos2a {

// Endmember matrix A (bands x N) and abundance matrix S (N x pixels).
struct Factorization {
    Matrix endmembers;
    Matrix abundances;

    // Entries finite and non-negative, inner dimensions agree.
    void validate() const;
};

struct SceneSpec {
    Index height = 64;
    Index width = 64;
    Index bands = 172;
    Index n_endmembers = 5;
    std::uint64_t seed = 0;
    double smoothness = 20.0;     // spectral correlation length, in bands
    double spatial_scale = 4.0;   // abundance field correlation length, in pixels
    double sharpness = 3.0;       // softmax temperature on the unit-variance fields
    bool pure_pixel = true;
    double noise_sigma = 0.0;     // additive Gaussian noise, off by default
    double wavelength_start_nm = 400.0;
    double wavelength_end_nm = 2500.0;

    void validate() const;
};

struct Scene {
    HyperCube cube;
    Factorization truth;
    std::vector<Index> pure_pixels; // pure_pixels[i] has abundance e_i; empty unless requested
};

// Deterministic low-rank scene Y = A S (plus optional noise).
Scene generate_scene(const SceneSpec& spec);

} // namespace cos2a
