#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cos2a/cube.hpp"

namespace cos2a {

// Uniform r x r region integration on a height x width grid.
//
// As a matrix this is B = I_{L/r^2} (x) (1_{r^2} / r^2), acting by right
// multiplication, X * B, when the L pixels are listed block-major: all r^2
// pixels of block 0 (row-major inside the block), then block 1, and so on,
// with blocks themselves row-major over the coarse grid. Matrices handed to
// apply_blur keep the ordinary row-major pixel order; the operator does the
// bookkeeping spatially and never forms B.
struct BlurOperator {
    Index height = 0;
    Index width = 0;
    Index factor = 2;

    Index low_height() const { return height / factor; }
    Index low_width() const { return width / factor; }
    Index pixels() const { return height * width; }
    Index low_pixels() const { return low_height() * low_width(); }

    // Throws InputError unless both dimensions are divisible by factor.
    void validate() const;
};

// Row-major pixel indices listed in block-major order (the vectorisation
// under which the blur is I (x) 1/r^2).
std::vector<Index> block_major_order(const BlurOperator& op);

// X * B: per band, block mean. Output columns are blocks, row-major.
Matrix apply_blur(const Matrix& x, const BlurOperator& op);
// X_lo * B^T: every pixel receives its block's value divided by r^2.
Matrix apply_blur_adjoint(const Matrix& x_lo, const BlurOperator& op);

// 1/2 sum_{i<j} ||a_i - a_j||^2 over the columns of A.
double volume_surrogate(const Matrix& a);
// A (N I - 1 1^T).
Matrix volume_gradient(const Matrix& a);

// ||X - Y_de||_Q^2 with Q = B B^T (x) I_M, evaluated as ||(X - Y_de) B||_F^2.
double q_norm_sq(const Matrix& x, const Matrix& y_de, const BlurOperator& op);

Matrix prox_l1_nonneg(const Matrix& x, double threshold);
Matrix project_nonneg(const Matrix& x);

struct SpaResult {
    std::vector<Index> indices;
    bool rank_deficient = false; // fewer than k columns had non-negligible residual
};

// Successive projection: pick the largest-residual column, deflate, repeat.
// Ties go to the lowest column index.
SpaResult spa_select(const Matrix& pixels, Index k);

using LinearOp = std::function<Vector(const Vector&)>;

inline constexpr double kLipschitzSafety = 1.05;

// Power iteration on adjoint(apply(.)); returns the top eigenvalue estimate
// times kLipschitzSafety, or 0 for the zero operator. For a self-adjoint PSD
// operator H, pass apply = H and adjoint = identity to get lambda_max(H).
double estimate_lipschitz(const LinearOp& apply, const LinearOp& adjoint, Index dim, int iters,
                          std::uint64_t seed);

// Solves (2 D^T D + rho I) X = RHS through the small m x m system
// Phi = (I + (2/rho) D D^T)^{-1}.
class WoodburySolver {
public:
    WoodburySolver(Matrix d, double rho);

    Matrix solve(const Matrix& rhs) const;
    const Matrix& phi() const { return phi_; }
    double rho() const { return rho_; }

private:
    Matrix d_;
    double rho_;
    Matrix phi_;
};

Matrix woodbury_solve(const Matrix& d, double rho, const Matrix& rhs);

} // namespace cos2a
