#include "cos2a/response.hpp"

#include "cos2a/apg.hpp"
#include "cos2a/error.hpp"
#include "cos2a/numops.hpp"

namespace cos2a {

void RidgeConfig::validate() const {
    if (!(eta >= 0.0)) throw InputError("ridge eta must be >= 0");
    if (max_iters < 1) throw InputError("ridge max_iters must be >= 1");
    if (!(tol >= 0.0) || !(opt_tol >= 0.0)) throw InputError("ridge tolerances must be >= 0");
    if (power_iters < 1) throw InputError("ridge power_iters must be >= 1");
}

double ridge_objective(const Matrix& d, const Matrix& y_de, const Matrix& y_s_hi, double eta) {
    return (d * y_de - y_s_hi).squaredNorm() + eta * d.squaredNorm();
}

ResponseEstimate estimate_response(const Matrix& y_de, const Matrix& y_s_hi, const RidgeConfig& cfg,
                                   const std::optional<Matrix>& start) {
    cfg.validate();
    if (y_de.cols() != y_s_hi.cols()) throw InputError("Y_DE and the 10 m bands cover different pixel counts");
    if (!y_de.allFinite() || !y_s_hi.allFinite()) throw InputError("response estimation inputs must be finite");

    const Index bands = y_de.rows();
    const Matrix gram = y_de * y_de.transpose();
    const Matrix cross = y_s_hi * y_de.transpose();

    const double gram_top = estimate_lipschitz([&](const Vector& v) -> Vector { return gram * v; },
                                               [](const Vector& v) { return v; }, bands, cfg.power_iters, cfg.seed);
    if (gram_top == 0.0) throw NumericalError("Y_DE is zero; the response is not identifiable");
    const double eta = cfg.eta;

    ApgProblem problem;
    problem.lipschitz = 2.0 * gram_top + 2.0 * eta;
    problem.objective = [&](const Matrix& d) { return ridge_objective(d, y_de, y_s_hi, eta); };
    problem.gradient = [&](const Matrix& d) -> Matrix { return 2.0 * (d * gram - cross) + 2.0 * eta * d; };
    problem.prox = [](const Matrix& d, double) { return project_nonneg(d); };

    Matrix d0 = Matrix::Zero(y_s_hi.rows(), bands);
    if (start) {
        if (start->rows() != d0.rows() || start->cols() != d0.cols()) throw InputError("response start has wrong shape");
        d0 = project_nonneg(*start);
    }

    ApgOptions options;
    options.max_iters = cfg.max_iters;
    options.rel_obj_tol = cfg.tol;
    options.opt_tol = cfg.opt_tol;
    ApgResult r = apg_minimize(problem, std::move(d0), options);

    ResponseEstimate est;
    est.response = std::move(r.x);
    est.iterations = r.iterations;
    est.objective = r.objective;
    est.optimality = r.optimality;
    est.lipschitz = problem.lipschitz;
    est.certified = r.optimality <= 1e-6 * std::max(1.0, est.response.norm());
    est.underdetermined = y_de.cols() < bands;
    return est;
}

} // namespace cos2a
