#include "cos2a/rough.hpp"

#include <cmath>

#include "cos2a/error.hpp"
#include "cos2a/numops.hpp"

namespace cos2a {

const char* to_string(InitMode mode) { return mode == InitMode::min_norm ? "min_norm" : "adjoint"; }

InitMode parse_init_mode(const std::string& name) {
    if (name == "min_norm") return InitMode::min_norm;
    if (name == "adjoint") return InitMode::adjoint;
    throw InputError("unknown init mode '" + name + "'");
}

void UnfoldConfig::validate() const {
    if (stages < 1) throw InputError("unfolded ADMM needs at least one stage");
    if (!(rho > 0.0)) throw InputError("ADMM penalty rho must be positive");
    denoiser.validate();
}

Matrix spectral_upsample_init(const Matrix& y_s, const Matrix& d, InitMode mode) {
    if (d.rows() != y_s.rows()) throw InputError("response rows do not match multispectral bands");
    if (mode == InitMode::adjoint) {
        Matrix out = d.transpose() * y_s;
        const Vector weight = d.colwise().sum().transpose();
        for (Index i = 0; i < out.rows(); ++i) {
            if (weight(i) != 0.0) {
                out.row(i) /= weight(i);
            } else {
                out.row(i).setZero();
            }
        }
        return out;
    }
    const Matrix gram = d * d.transpose();
    const double trace = gram.trace();
    // A zero response maps everything to zero; D^T kills any solve anyway.
    if (trace == 0.0) return Matrix::Zero(d.cols(), y_s.cols());
    const double eps = 1e-8 * trace / static_cast<double>(d.rows());
    const Matrix reg = gram + eps * Matrix::Identity(d.rows(), d.rows());
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() != Eigen::Success) throw NumericalError("spectral upsampling Gram matrix is singular");
    return d.transpose() * llt.solve(y_s);
}

RoughResult run_unfolded_admm(const Matrix& y_s, const Matrix& d, Index height, Index width,
                              const UnfoldConfig& cfg) {
    cfg.validate();
    if (y_s.cols() != height * width) throw InputError("multispectral image does not match the grid");
    if (d.rows() != y_s.rows()) throw InputError("response rows do not match multispectral bands");
    if (!y_s.allFinite() || !d.allFinite()) throw InputError("rough solver inputs must be finite");

    const WoodburySolver solver(d, cfg.rho);
    const Matrix data_term = 2.0 * d.transpose() * y_s;

    Matrix y_h = spectral_upsample_init(y_s, d, cfg.init);
    Matrix u = Matrix::Zero(y_h.rows(), y_h.cols());
    Matrix z;

    RoughResult result;
    for (int k = 0; k < cfg.stages; ++k) {
        z = denoise(y_h - u, height, width, cfg.denoiser, cfg.rho);
        if (!z.allFinite()) throw NumericalError("non-finite denoiser output at stage " + std::to_string(k + 1));

        Matrix rhs = data_term + cfg.rho * (z + u);
        y_h = solver.solve(rhs);
        if (!y_h.allFinite()) throw NumericalError("non-finite Y_H update at stage " + std::to_string(k + 1));

        u += z - y_h;

        StageDiagnostics diag;
        diag.stage = k + 1;
        diag.primal_residual = (y_h - z).norm();
        const Matrix lhs = 2.0 * d.transpose() * (d * y_h) + cfg.rho * y_h;
        diag.subproblem_residual = (lhs - rhs).norm() / std::max(rhs.norm(), 1e-300);
        result.stages.push_back(diag);
    }
    result.y_de = cfg.clamp_output ? project_nonneg(z) : z;
    return result;
}

} // namespace cos2a
