#pragma once

#include <functional>

#include "cos2a/cube.hpp"

namespace cos2a {

// Composite problem  min_x f(x) + g(x)  with f smooth (gradient Lipschitz
// constant `lipschitz`) and g handled through its proximal map.
struct ApgProblem {
    std::function<double(const Matrix&)> objective; // f + g
    std::function<Matrix(const Matrix&)> gradient;  // grad f
    std::function<Matrix(const Matrix&, double)> prox; // prox of step * g
    double lipschitz = 0.0;
};

struct ApgOptions {
    int max_iters = 100;
    // Stop when |F_k - F_{k+1}| <= rel_obj_tol * max(1, |F_k|) on a momentum
    // step. Zero disables the test.
    double rel_obj_tol = 0.0;
    // Stop when the gradient-mapping step ||x - prox(x - grad/L)|| falls below
    // opt_tol * max(1, ||x||).
    double opt_tol = 1e-10;
};

struct ApgResult {
    Matrix x;
    int iterations = 0;
    double objective = 0.0;
    double optimality = 0.0; // ||x - prox(x - grad f(x)/L)||_F at the returned x
    bool converged = false;
};

// Monotone FISTA with restart: accepted iterates never increase the
// objective. When a momentum step would increase it, the momentum is reset
// and a plain proximal-gradient step is taken from the current iterate.
ApgResult apg_minimize(const ApgProblem& problem, Matrix x0, const ApgOptions& options);

} // namespace cos2a
