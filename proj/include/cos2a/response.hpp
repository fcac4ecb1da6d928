#pragma once

#include <cstdint>
#include <optional>

#include "cos2a/cube.hpp"

namespace cos2a {

struct RidgeConfig {
    double eta = 1e-4;
    int max_iters = 2000;
    double tol = 1e-9;      // relative objective change
    double opt_tol = 1e-7;  // gradient-mapping step relative to max(1, ||D||)
    int power_iters = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ResponseEstimate {
    Matrix response;          // m x M, non-negative
    int iterations = 0;
    double objective = 0.0;
    double optimality = 0.0;  // ||D - P+(D - grad/Lip)||_F
    double lipschitz = 0.0;
    bool certified = false;   // optimality <= 1e-6 max(1, ||D||_F)
    bool underdetermined = false; // fewer pixels than hyperspectral bands
};

// ||D Y_de - Y_s_hi||_F^2 + eta ||D||_F^2 at D.
double ridge_objective(const Matrix& d, const Matrix& y_de, const Matrix& y_s_hi, double eta);

// argmin_{D >= 0} ||D Y_de - Y_s_hi||_F^2 + eta ||D||_F^2 by accelerated
// projected gradient from D = 0 (or `start`).
ResponseEstimate estimate_response(const Matrix& y_de, const Matrix& y_s_hi, const RidgeConfig& cfg,
                                   const std::optional<Matrix>& start = std::nullopt);

} // namespace cos2a
