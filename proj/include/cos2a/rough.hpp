#pragma once

#include <vector>

#include "cos2a/cube.hpp"
#include "cos2a/denoiser.hpp"

namespace cos2a {

enum class InitMode { min_norm, adjoint };

const char* to_string(InitMode mode);
InitMode parse_init_mode(const std::string& name);

struct UnfoldConfig {
    int stages = 4;
    double rho = 1.0;
    DenoiserSpec denoiser = DenoiserSpec::box(3);
    InitMode init = InitMode::min_norm;
    bool clamp_output = true; // clamp Y_DE at zero before it leaves the solver

    void validate() const;
};

// Y_H^0 from the multispectral image.
//   min_norm: D^T (D D^T + eps I)^{-1} Y_S, eps = 1e-8 tr(D D^T) / m
//   adjoint:  D^T Y_S with each hyperspectral row divided by its total response
Matrix spectral_upsample_init(const Matrix& y_s, const Matrix& d, InitMode mode = InitMode::min_norm);

struct StageDiagnostics {
    int stage = 0;
    double primal_residual = 0.0;     // ||Y_H^{k+1} - Z^{k+1}||_F
    double subproblem_residual = 0.0; // relative residual of the Y_H linear system
};

struct RoughResult {
    Matrix y_de; // bands x pixels
    std::vector<StageDiagnostics> stages;
};

// K-stage unfolded ADMM for min ||Y_S - D Y||_F^2 + DIP(Y):
//   U^0 = 0, Y^0 = init
//   Z^{k+1} = denoise(Y^k - U^k)
//   Y^{k+1} = (2 D^T D + rho I)^{-1} (2 D^T Y_S + rho (Z^{k+1} + U^k))
//   U^{k+1} = U^k - Y^{k+1} + Z^{k+1}
// and returns Z^K.
RoughResult run_unfolded_admm(const Matrix& y_s, const Matrix& d, Index height, Index width,
                              const UnfoldConfig& cfg);

} // namespace cos2a
