#include "cos2a/cnmf.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "cos2a/apg.hpp"
#include "cos2a/error.hpp"

namespace cos2a {
namespace {

constexpr double kMonotoneSlack = 1e-9;

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflatten(const Vector& v, Index rows, Index cols) { return Eigen::Map<const Matrix>(v.data(), rows, cols); }

void check_shapes(const CnmfInputs& in) {
    in.blur.validate();
    if (in.y_h_lo.cols() != in.blur.low_pixels()) throw InputError("Y_h_lo does not match the low-res grid");
    if (in.y_m.cols() != in.blur.pixels()) throw InputError("Y_m does not match the high-res grid");
    if (in.d.rows() != in.y_m.rows() || in.d.cols() != in.y_h_lo.rows()) {
        throw InputError("response is " + std::to_string(in.d.rows()) + "x" + std::to_string(in.d.cols()) +
                         ", expected " + std::to_string(in.y_m.rows()) + "x" + std::to_string(in.y_h_lo.rows()));
    }
}

void check_step(double before, double after, int iteration, const char* step) {
    if (!std::isfinite(after)) {
        throw NumericalError("non-finite CNMF objective after " + std::string(step) + "-step " +
                             std::to_string(iteration));
    }
    if (after - before > kMonotoneSlack * std::abs(before)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "CNMF objective increased in %s-step %d: %.17g -> %.17g", step, iteration,
                      before, after);
        throw ContractViolation(buf);
    }
}

ApgOptions inner_options(const CnmfConfig& cfg) {
    ApgOptions o;
    o.max_iters = cfg.inner_max;
    o.rel_obj_tol = cfg.inner_tol;
    o.opt_tol = 1e-12;
    return o;
}

} // namespace

void CnmfConfig::validate() const {
    if (n_endmembers < 1) throw InputError("CNMF needs at least one endmember");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw InputError("CNMF penalties must be >= 0");
    if (r < 1) throw InputError("CNMF blur factor must be >= 1");
    if (outer_max < 1 || inner_max < 1 || power_iters < 1) throw InputError("CNMF iteration limits must be >= 1");
    if (!(outer_tol >= 0.0) || !(inner_tol >= 0.0)) throw InputError("CNMF tolerances must be >= 0");
}

CnmfInputs duality_transform(const Matrix& y_de, const Matrix& y_s_hi, const Matrix& d_tilde, Index height,
                             Index width, Index r) {
    const BlurOperator blur{height, width, r};
    blur.validate();
    if (y_de.cols() != blur.pixels() || y_s_hi.cols() != blur.pixels()) {
        throw InputError("duality transform inputs do not match the " + std::to_string(height) + "x" +
                         std::to_string(width) + " grid");
    }
    if (d_tilde.rows() != y_s_hi.rows() || d_tilde.cols() != y_de.rows()) {
        throw InputError("estimated response shape does not match the images");
    }
    return CnmfInputs{apply_blur(y_de, blur), y_s_hi, d_tilde, blur};
}

double cnmf_objective(const CnmfInputs& in, const Matrix& a, const Matrix& s, double lambda1, double lambda2) {
    const Matrix s_lo = apply_blur(s, in.blur);
    return 0.5 * (in.y_h_lo - a * s_lo).squaredNorm() + 0.5 * (in.y_m - (in.d * a) * s).squaredNorm() +
           lambda1 * volume_surrogate(a) + lambda2 * s.cwiseAbs().sum();
}

double spectral_objective(const Matrix& y_s_hi, const Matrix& d_tilde, const Matrix& y_de, const BlurOperator& blur,
                          const Matrix& a, const Matrix& s, double lambda, double alpha, double beta) {
    const Matrix as = a * s;
    return (y_s_hi - d_tilde * as).squaredNorm() + 0.5 * lambda * q_norm_sq(as, y_de, blur) +
           alpha * volume_surrogate(a) + beta * s.cwiseAbs().sum();
}

CnmfInit init_factorization(const CnmfInputs& in, const CnmfConfig& cfg) {
    cfg.validate();
    check_shapes(in);
    const Index n = cfg.n_endmembers;
    const Index bands = in.y_h_lo.rows();
    if (n > std::min(bands, in.y_h_lo.cols())) {
        throw InputError("model order " + std::to_string(n) + " exceeds min(bands, low-res pixels)");
    }

    CnmfInit init;
    const SpaResult spa = spa_select(in.y_h_lo, n);
    init.spa_indices = spa.indices;
    Matrix a(bands, n);
    for (std::size_t i = 0; i < spa.indices.size(); ++i) {
        a.col(static_cast<Index>(i)) = in.y_h_lo.col(spa.indices[i]).cwiseMax(0.0);
    }
    const auto picked = static_cast<Index>(spa.indices.size());
    if (picked < n) {
        std::mt19937_64 rng(cfg.seed);
        const double top = std::max(in.y_h_lo.maxCoeff(), 1e-3);
        std::uniform_real_distribution<double> unif(0.0, top);
        for (Index i = picked; i < n; ++i) {
            for (Index b = 0; b < bands; ++b) a(b, i) = unif(rng);
        }
        init.random_columns = n - picked;
    }

    // Abundances: non-negative least squares against the 10 m bands only.
    const Matrix g = in.d * a;
    const Matrix gtg = g.transpose() * g;
    const Matrix gty = g.transpose() * in.y_m;
    ApgProblem p;
    p.lipschitz = estimate_lipschitz([&](const Vector& v) -> Vector { return gtg * v; },
                                     [](const Vector& v) { return v; }, n, cfg.power_iters, cfg.seed);
    p.objective = [&](const Matrix& s) { return 0.5 * (in.y_m - g * s).squaredNorm(); };
    p.gradient = [&](const Matrix& s) -> Matrix { return gtg * s - gty; };
    p.prox = [](const Matrix& s, double) { return project_nonneg(s); };
    ApgOptions o;
    o.max_iters = cfg.inner_max;
    o.opt_tol = 1e-14;
    init.fac.endmembers = std::move(a);
    init.fac.abundances = apg_minimize(p, Matrix::Zero(n, in.y_m.cols()), o).x;
    return init;
}

Matrix update_endmembers(const CnmfInputs& in, const Matrix& a, const Matrix& s, const CnmfConfig& cfg) {
    const Matrix s_lo = apply_blur(s, in.blur);
    const Matrix g1 = s_lo * s_lo.transpose();
    const Matrix g2 = s * s.transpose();
    const Matrix c = in.y_h_lo * s_lo.transpose() + in.d.transpose() * (in.y_m * s.transpose());
    const double l1 = cfg.lambda1;
    // Terms that do not depend on A.
    const double offset = 0.5 * (in.y_h_lo.squaredNorm() + in.y_m.squaredNorm()) + cfg.lambda2 * s.cwiseAbs().sum();
    const Index rows = a.rows();
    const Index cols = a.cols();

    // Gradient of the data terms is H(A) - C with H(A) = A G1 + D^T D A G2.
    auto data_hessian = [&](const Matrix& x) -> Matrix { return x * g1 + in.d.transpose() * ((in.d * x) * g2); };

    ApgProblem p;
    p.lipschitz = estimate_lipschitz(
        [&](const Vector& v) -> Vector {
            const Matrix x = unflatten(v, rows, cols);
            return flatten(data_hessian(x) + l1 * volume_gradient(x));
        },
        [](const Vector& v) { return v; }, a.size(), cfg.power_iters, cfg.seed);
    p.objective = [&](const Matrix& x) {
        return offset + 0.5 * data_hessian(x).cwiseProduct(x).sum() - c.cwiseProduct(x).sum() +
               l1 * volume_surrogate(x);
    };
    p.gradient = [&](const Matrix& x) -> Matrix { return data_hessian(x) - c + l1 * volume_gradient(x); };
    p.prox = [](const Matrix& x, double) { return project_nonneg(x); };
    return apg_minimize(p, a, inner_options(cfg)).x;
}

Matrix update_abundances(const CnmfInputs& in, const Matrix& a, const Matrix& s, const CnmfConfig& cfg) {
    const Matrix g = in.d * a;
    const Matrix gtg = g.transpose() * g;
    const Matrix gty = g.transpose() * in.y_m;
    const Matrix ata = a.transpose() * a;
    const Matrix aty = a.transpose() * in.y_h_lo;
    const double l2 = cfg.lambda2;
    const double offset =
        0.5 * (in.y_h_lo.squaredNorm() + in.y_m.squaredNorm()) + cfg.lambda1 * volume_surrogate(a);
    const double rr = static_cast<double>(in.blur.factor * in.blur.factor);

    // The blur's nonzero eigenvalue 1/r^2 belongs to block-constant images,
    // so the Hessian's top eigenvalue is that of A^T A / r^2 + G^T G.
    const Matrix reduced = ata / rr + gtg;
    ApgProblem p;
    p.lipschitz = estimate_lipschitz([&](const Vector& v) -> Vector { return reduced * v; },
                                     [](const Vector& v) { return v; }, a.cols(), cfg.power_iters, cfg.seed);
    p.objective = [&](const Matrix& x) {
        const Matrix x_lo = apply_blur(x, in.blur);
        return offset + 0.5 * (ata * x_lo).cwiseProduct(x_lo).sum() - aty.cwiseProduct(x_lo).sum() +
               0.5 * (gtg * x).cwiseProduct(x).sum() - gty.cwiseProduct(x).sum() + l2 * x.cwiseAbs().sum();
    };
    p.gradient = [&](const Matrix& x) -> Matrix {
        const Matrix x_lo = apply_blur(x, in.blur);
        return apply_blur_adjoint(ata * x_lo - aty, in.blur) + gtg * x - gty;
    };
    p.prox = [l2](const Matrix& x, double step) { return prox_l1_nonneg(x, step * l2); };
    return apg_minimize(p, s, inner_options(cfg)).x;
}

CnmfResult solve_cnmf(const CnmfInputs& in, const CnmfConfig& cfg) {
    CnmfInit init = init_factorization(in, cfg);
    CnmfResult result = solve_cnmf(in, cfg, std::move(init.fac));
    result.random_init_columns = init.random_columns;
    return result;
}

CnmfResult solve_cnmf(const CnmfInputs& in, const CnmfConfig& cfg, Factorization start) {
    cfg.validate();
    check_shapes(in);
    if (start.endmembers.rows() != in.y_h_lo.rows() || start.abundances.cols() != in.y_m.cols() ||
        start.endmembers.cols() != start.abundances.rows()) {
        throw InputError("CNMF starting point has the wrong shape");
    }
    Matrix a = project_nonneg(start.endmembers);
    Matrix s = project_nonneg(start.abundances);

    CnmfResult result;
    double f = cnmf_objective(in, a, s, cfg.lambda1, cfg.lambda2);
    if (!std::isfinite(f)) throw NumericalError("non-finite CNMF objective at the starting point");
    result.trace.push_back({0, "init", f});

    for (int it = 1; it <= cfg.outer_max; ++it) {
        const double sweep_start = f;

        // Inner solves run on the expanded quadratic, which carries more
        // rounding than the direct residual; a step the direct evaluation
        // scores as an increase is dropped.
        double before = f;
        Matrix a_next = update_endmembers(in, a, s, cfg);
        double next = cnmf_objective(in, a_next, s, cfg.lambda1, cfg.lambda2);
        if (!std::isfinite(next)) throw NumericalError("non-finite CNMF objective after A-step " + std::to_string(it));
        if (next <= f) {
            a = std::move(a_next);
            f = next;
        }
        check_step(before, f, it, "A");
        result.trace.push_back({it, "A", f});

        // Dead endmember: restart it from the worst-fitted low-res pixel.
        Index dead = 0;
        for (Index i = 0; i < a.cols(); ++i) {
            if (a.col(i).norm() > 0.0) continue;
            const Matrix residual = in.y_h_lo - a * apply_blur(s, in.blur);
            Index worst = 0;
            residual.colwise().squaredNorm().maxCoeff(&worst);
            const Vector candidate = in.y_h_lo.col(worst).cwiseMax(0.0);
            if (candidate.norm() == 0.0) continue;
            a.col(i) = candidate;
            ++dead;
        }
        if (dead > 0) {
            result.reseeded_columns += dead;
            f = cnmf_objective(in, a, s, cfg.lambda1, cfg.lambda2);
            result.trace.push_back({it, "reseed", f});
        }

        before = f;
        Matrix s_next = update_abundances(in, a, s, cfg);
        next = cnmf_objective(in, a, s_next, cfg.lambda1, cfg.lambda2);
        if (!std::isfinite(next)) throw NumericalError("non-finite CNMF objective after S-step " + std::to_string(it));
        if (next <= f) {
            s = std::move(s_next);
            f = next;
        }
        check_step(before, f, it, "S");
        result.trace.push_back({it, "S", f});

        result.outer_iterations = it;
        if (dead == 0 && std::abs(sweep_start - f) <= cfg.outer_tol * std::abs(sweep_start)) {
            result.converged = true;
            break;
        }
    }
    result.fac = Factorization{std::move(a), std::move(s)};
    return result;
}

HyperCube reconstruct(const Factorization& fac, Index height, Index width, std::vector<double> wavelengths_nm) {
    fac.validate();
    return HyperCube::from_matrix(height, width, std::move(wavelengths_nm), fac.endmembers * fac.abundances);
}

std::string format_trace_csv(const std::vector<TraceEntry>& trace) {
    std::string out = "iteration,half_step,objective\n";
    char buf[64];
    for (const auto& e : trace) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.objective);
        out += std::to_string(e.iteration) + "," + e.half_step + "," + buf + "\n";
    }
    return out;
}

void write_trace_csv(const std::vector<TraceEntry>& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write trace " + path.string());
    out << format_trace_csv(trace);
}

} // namespace cos2a
