#include "cos2a/numops.hpp"

#include <cmath>
#include <random>

#include "cos2a/error.hpp"

namespace cos2a {

void BlurOperator::validate() const {
    if (factor < 1) throw InputError("blur factor must be >= 1");
    if (height <= 0 || width <= 0) throw InputError("blur grid must be non-empty");
    if (height % factor != 0 || width % factor != 0) {
        throw InputError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by blur factor " + std::to_string(factor));
    }
}

std::vector<Index> block_major_order(const BlurOperator& op) {
    op.validate();
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(op.pixels()));
    for (Index by = 0; by < op.low_height(); ++by) {
        for (Index bx = 0; bx < op.low_width(); ++bx) {
            for (Index dy = 0; dy < op.factor; ++dy) {
                for (Index dx = 0; dx < op.factor; ++dx) {
                    order.push_back(pixel_index(by * op.factor + dy, bx * op.factor + dx, op.width));
                }
            }
        }
    }
    return order;
}

Matrix apply_blur(const Matrix& x, const BlurOperator& op) {
    op.validate();
    if (x.cols() != op.pixels()) {
        throw InputError("blur input has " + std::to_string(x.cols()) + " pixels, expected " +
                         std::to_string(op.pixels()));
    }
    const Index r = op.factor;
    Matrix out = Matrix::Zero(x.rows(), op.low_pixels());
    for (Index y = 0; y < op.height; ++y) {
        for (Index xx = 0; xx < op.width; ++xx) {
            out.col(pixel_index(y / r, xx / r, op.low_width())) += x.col(pixel_index(y, xx, op.width));
        }
    }
    out /= static_cast<double>(r * r);
    return out;
}

Matrix apply_blur_adjoint(const Matrix& x_lo, const BlurOperator& op) {
    op.validate();
    if (x_lo.cols() != op.low_pixels()) throw InputError("blur adjoint input has wrong pixel count");
    const Index r = op.factor;
    const double scale = 1.0 / static_cast<double>(r * r);
    Matrix out(x_lo.rows(), op.pixels());
    for (Index y = 0; y < op.height; ++y) {
        for (Index xx = 0; xx < op.width; ++xx) {
            out.col(pixel_index(y, xx, op.width)) = scale * x_lo.col(pixel_index(y / r, xx / r, op.low_width()));
        }
    }
    return out;
}

double volume_surrogate(const Matrix& a) {
    double sum = 0.0;
    for (Index i = 0; i + 1 < a.cols(); ++i) {
        for (Index j = i + 1; j < a.cols(); ++j) sum += (a.col(i) - a.col(j)).squaredNorm();
    }
    return 0.5 * sum;
}

Matrix volume_gradient(const Matrix& a) {
    const Vector col_sum = a.rowwise().sum();
    Matrix g = static_cast<double>(a.cols()) * a;
    g.colwise() -= col_sum;
    return g;
}

double q_norm_sq(const Matrix& x, const Matrix& y_de, const BlurOperator& op) {
    if (x.rows() != y_de.rows() || x.cols() != y_de.cols()) {
        throw InputError("Q-norm operands have different shapes");
    }
    return apply_blur(x - y_de, op).squaredNorm();
}

Matrix prox_l1_nonneg(const Matrix& x, double threshold) {
    if (!(threshold >= 0.0)) throw InputError("soft threshold must be non-negative");
    return (x.array() - threshold).max(0.0).matrix();
}

Matrix project_nonneg(const Matrix& x) { return x.cwiseMax(0.0); }

SpaResult spa_select(const Matrix& pixels, Index k) {
    if (k < 1 || k > pixels.cols()) {
        throw InputError("SPA needs 1 <= k <= " + std::to_string(pixels.cols()) + ", got " + std::to_string(k));
    }
    constexpr double kRankTol = 1e-10;

    Matrix residual = pixels;
    Vector norms = residual.colwise().squaredNorm().transpose();
    const double first_max = norms.size() ? norms.maxCoeff() : 0.0;

    SpaResult result;
    for (Index step = 0; step < k; ++step) {
        Index best = 0;
        for (Index j = 1; j < norms.size(); ++j) {
            if (norms(j) > norms(best)) best = j;
        }
        if (!(norms(best) > kRankTol * kRankTol * first_max) || first_max == 0.0) {
            result.rank_deficient = true;
            break;
        }
        result.indices.push_back(best);
        const Vector u = residual.col(best) / std::sqrt(norms(best));
        const Eigen::RowVectorXd proj = u.transpose() * residual;
        residual.noalias() -= u * proj;
        norms = residual.colwise().squaredNorm().transpose();
        // Picked columns are exactly zero in exact arithmetic.
        for (Index picked : result.indices) norms(picked) = 0.0;
    }
    return result;
}

double estimate_lipschitz(const LinearOp& apply, const LinearOp& adjoint, Index dim, int iters,
                          std::uint64_t seed) {
    if (iters < 1) throw InputError("power iteration needs at least one step");
    if (dim <= 0) return 0.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x(dim);
    for (Index i = 0; i < dim; ++i) x(i) = normal(rng);
    x.normalize();

    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vector y = adjoint(apply(x));
        const double norm = y.norm();
        if (!std::isfinite(norm)) throw NumericalError("power iteration diverged");
        if (norm == 0.0) return 0.0;
        lambda = norm;
        x = y / norm;
    }
    return kLipschitzSafety * lambda;
}

WoodburySolver::WoodburySolver(Matrix d, double rho) : d_(std::move(d)), rho_(rho) {
    if (!(rho_ > 0.0)) throw InputError("ADMM penalty rho must be positive");
    const Index m = d_.rows();
    Matrix inner = Matrix::Identity(m, m) + (2.0 / rho_) * d_ * d_.transpose();
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) throw NumericalError("Woodbury inner matrix is not positive definite");
    phi_ = llt.solve(Matrix::Identity(m, m));
    phi_ = 0.5 * (phi_ + phi_.transpose()).eval();
}

Matrix WoodburySolver::solve(const Matrix& rhs) const {
    if (rhs.rows() != d_.cols()) throw InputError("Woodbury right-hand side has wrong row count");
    Matrix down = d_ * rhs;
    Matrix out = rhs;
    out.noalias() -= (2.0 / rho_) * (d_.transpose() * (phi_ * down));
    out /= rho_;
    return out;
}

Matrix woodbury_solve(const Matrix& d, double rho, const Matrix& rhs) { return WoodburySolver(d, rho).solve(rhs); }

} // namespace cos2a
