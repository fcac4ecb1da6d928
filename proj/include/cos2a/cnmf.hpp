#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cos2a/cube.hpp"
#include "cos2a/numops.hpp"
#include "cos2a/scene.hpp"

namespace cos2a {

struct CnmfConfig {
    Index n_endmembers = 10;
    double lambda1 = 0.001; // volume weight
    double lambda2 = 0.001; // l1 weight on abundances
    Index r = 2;
    int outer_max = 200;
    double outer_tol = 1e-5;
    int inner_max = 100;
    double inner_tol = 1e-7;
    int power_iters = 50;
    std::uint64_t seed = 0;

    void validate() const;
};

// Inputs of the coupled-NMF problem
//   min_{A,S >= 0} 1/2 ||Y_h_lo - A S B||^2 + 1/2 ||Y_m - D A S||^2
//                  + lambda1 vol(A) + lambda2 ||S||_1
struct CnmfInputs {
    Matrix y_h_lo; // bands x low-res pixels
    Matrix y_m;    // m x pixels
    Matrix d;      // m x bands
    BlurOperator blur;
};

// Recasts the Q-regularised spectral problem as coupled NMF:
// Y_h_lo = Y_de B, Y_m = the 10 m bands, D = the estimated 10 m response.
CnmfInputs duality_transform(const Matrix& y_de, const Matrix& y_s_hi, const Matrix& d_tilde, Index height,
                             Index width, Index r);

double cnmf_objective(const CnmfInputs& in, const Matrix& a, const Matrix& s, double lambda1, double lambda2);

// ||Y_s_hi - D A S||^2 + (lambda/2) ||A S - Y_de||_Q^2 + alpha vol(A) + beta ||S||_1,
// the spectral-domain form the coupled-NMF problem is equivalent to.
double spectral_objective(const Matrix& y_s_hi, const Matrix& d_tilde, const Matrix& y_de, const BlurOperator& blur,
                          const Matrix& a, const Matrix& s, double lambda, double alpha, double beta);

struct CnmfInit {
    Factorization fac;
    std::vector<Index> spa_indices;
    Index random_columns = 0; // columns filled at random after SPA ran out of rank
};

CnmfInit init_factorization(const CnmfInputs& in, const CnmfConfig& cfg);

// One block update each; both start from the given iterate and never
// increase the objective.
Matrix update_endmembers(const CnmfInputs& in, const Matrix& a, const Matrix& s, const CnmfConfig& cfg);
Matrix update_abundances(const CnmfInputs& in, const Matrix& a, const Matrix& s, const CnmfConfig& cfg);

struct TraceEntry {
    int iteration = 0;
    std::string half_step; // "init", "A", "S" or "reseed"
    double objective = 0.0;
};

struct CnmfResult {
    Factorization fac;
    std::vector<TraceEntry> trace;
    int outer_iterations = 0;
    bool converged = false;
    Index reseeded_columns = 0;
    Index random_init_columns = 0;
};

CnmfResult solve_cnmf(const CnmfInputs& in, const CnmfConfig& cfg);
CnmfResult solve_cnmf(const CnmfInputs& in, const CnmfConfig& cfg, Factorization start);

// Y_H* = A S on the full grid.
HyperCube reconstruct(const Factorization& fac, Index height, Index width, std::vector<double> wavelengths_nm);

std::string format_trace_csv(const std::vector<TraceEntry>& trace);
void write_trace_csv(const std::vector<TraceEntry>& trace, const std::filesystem::path& path);

} // namespace cos2a
