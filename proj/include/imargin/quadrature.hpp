#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace imargin {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// n-point Gauss-Legendre rule on [-1, 1]. Rules are cached; the reference
// stays valid for the life of the process.
const QuadratureRule& gauss_legendre(std::size_t n);

// n-point Gauss-Hermite rule for expectations under the standard normal:
// sum w_i f(x_i) ~ E[f(Y)], weights summing to one.
const QuadratureRule& gauss_hermite_normal(std::size_t n);

struct IntegrationResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = false;
    std::size_t panels = 0;
};

// Adaptive bisection with a 15-point Gauss-Legendre rule; a panel is
// accepted when the whole-panel and two-half estimates agree within
// max(abs_tol, rel_tol * |panel value|).
IntegrationResult integrate_adaptive(const std::function<double(double)>& f, double a,
                                     double b, double abs_tol, double rel_tol,
                                     int max_depth = 40);

}  // namespace imargin
