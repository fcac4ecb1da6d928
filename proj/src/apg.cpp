#include "cos2a/apg.hpp"

#include <cmath>

#include "cos2a/error.hpp"

namespace cos2a {
namespace {

double optimality_at(const ApgProblem& p, const Matrix& x) {
    const double step = 1.0 / p.lipschitz;
    return (x - p.prox(x - step * p.gradient(x), step)).norm();
}

} // namespace

ApgResult apg_minimize(const ApgProblem& p, Matrix x0, const ApgOptions& options) {
    ApgResult result;
    result.x = std::move(x0);
    result.objective = p.objective(result.x);
    if (!std::isfinite(result.objective)) throw NumericalError("non-finite objective at APG start");

    // A zero Lipschitz constant means f is constant; only g is left and the
    // caller's starting point is kept.
    if (!(p.lipschitz > 0.0)) {
        result.converged = true;
        return result;
    }
    const double step = 1.0 / p.lipschitz;

    Matrix y = result.x;
    double t = 1.0;
    for (int it = 0; it < options.max_iters; ++it) {
        result.iterations = it + 1;
        Matrix z = p.prox(y - step * p.gradient(y), step);
        const double step_len = (z - y).norm();
        double fz = p.objective(z);
        if (!std::isfinite(fz)) throw NumericalError("non-finite objective inside APG");

        bool restarted = false;
        if (fz > result.objective) {
            restarted = true;
            t = 1.0;
            z = p.prox(result.x - step * p.gradient(result.x), step);
            fz = p.objective(z);
            if (!std::isfinite(fz)) throw NumericalError("non-finite objective inside APG");
            if (fz > result.objective) {
                // Plain step cannot improve: x is optimal to rounding.
                result.converged = true;
                break;
            }
        }

        const double prev = result.objective;
        Matrix prev_x = std::move(result.x);
        result.x = std::move(z);
        result.objective = fz;

        const double scale = std::max(1.0, result.x.norm());
        if (!restarted && step_len <= options.opt_tol * scale) {
            result.converged = true;
            break;
        }
        if (!restarted && options.rel_obj_tol > 0.0 &&
            prev - fz <= options.rel_obj_tol * std::max(1.0, std::abs(prev))) {
            result.converged = true;
            break;
        }

        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = result.x + ((t - 1.0) / t_next) * (result.x - prev_x);
        t = t_next;
    }
    result.optimality = optimality_at(p, result.x);
    return result;
}

} // namespace cos2a
