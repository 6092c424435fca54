#include "imargin/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Dense>

#include "imargin/errors.hpp"

namespace imargin {

namespace {

QuadratureRule make_legendre(std::size_t n) {
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const std::size_t half = (n + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0, p2 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                const auto jd = static_cast<double>(j);
                p1 = ((2.0 * jd - 1.0) * z * p2 - (jd - 1.0) * p3) / jd;
            }
            dp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
            const double step = p1 / dp;
            z -= step;
            if (std::abs(step) < 1e-16) break;
        }
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.weights[i] = w;
        rule.weights[n - 1 - i] = w;
    }
    return rule;
}

// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
// probabilists' Hermite recurrence, weights the squared first components of
// the normalized eigenvectors.
QuadratureRule make_hermite(std::size_t n) {
    const auto size = static_cast<Eigen::Index>(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(size);
    Eigen::VectorXd sub(std::max<Eigen::Index>(size - 1, 0));
    for (Eigen::Index i = 0; i + 1 < size; ++i) sub[i] = std::sqrt(static_cast<double>(i + 1));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
        throw NumericalError("Gauss-Hermite eigenvalue problem did not converge");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = static_cast<Eigen::Index>(i);
        rule.nodes[i] = solver.eigenvalues()[col];
        const double v = solver.eigenvectors()(0, col);
        rule.weights[i] = v * v;
    }
    // Exact symmetry about zero.
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
        const double w = 0.5 * (rule.weights[i] + rule.weights[n - 1 - i]);
        rule.nodes[i] = -x;
        rule.nodes[n - 1 - i] = x;
        rule.weights[i] = rule.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
    return rule;
}

template <class Make>
const QuadratureRule& cached(std::map<std::size_t, QuadratureRule>& cache, std::mutex& mu,
                             std::size_t n, Make make) {
    if (n == 0) throw DomainError("quadrature rule needs at least one node");
    std::lock_guard lock(mu);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, make(n)).first;
    return it->second;
}

double fixed_gl(const std::function<double(double)>& f, double a, double b) {
    const auto& rule = gauss_legendre(15);
    const double c = 0.5 * (a + b), r = 0.5 * (b - a);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights[i] * f(c + r * rule.nodes[i]);
    return acc * r;
}

struct AdaptContext {
    const std::function<double(double)>& f;
    double abs_tol;
    double rel_tol;
    double width;
    double scale;  // magnitude of the whole-interval estimate
};

void adapt(const AdaptContext& ctx, double a, double b, double whole, int depth,
           IntegrationResult& out) {
    const double mid = 0.5 * (a + b);
    const double left = fixed_gl(ctx.f, a, mid);
    const double right = fixed_gl(ctx.f, mid, b);
    const double diff = std::abs(left + right - whole);
    // Absolute tolerance is shared out in proportion to panel width.
    const double tol = std::max({ctx.abs_tol * std::abs(b - a) / ctx.width,
                                 ctx.rel_tol * std::abs(left + right), 1e-16 * ctx.scale});
    if (diff <= tol || depth <= 0) {
        if (diff > tol) out.converged = false;
        out.value += left + right;
        out.error += diff;
        out.panels += 1;
        return;
    }
    adapt(ctx, a, mid, left, depth - 1, out);
    adapt(ctx, mid, b, right, depth - 1, out);
}

}  // namespace

const QuadratureRule& gauss_legendre(std::size_t n) {
    static std::map<std::size_t, QuadratureRule> cache;
    static std::mutex mu;
    return cached(cache, mu, n, make_legendre);
}

const QuadratureRule& gauss_hermite_normal(std::size_t n) {
    static std::map<std::size_t, QuadratureRule> cache;
    static std::mutex mu;
    return cached(cache, mu, n, make_hermite);
}

IntegrationResult integrate_adaptive(const std::function<double(double)>& f, double a,
                                     double b, double abs_tol, double rel_tol,
                                     int max_depth) {
    IntegrationResult out;
    out.converged = true;
    if (a == b) return out;
    const double whole = fixed_gl(f, a, b);
    const AdaptContext ctx{f, abs_tol, rel_tol, std::abs(b - a), std::abs(whole)};
    adapt(ctx, a, b, whole, max_depth, out);
    return out;
}

}  // namespace imargin
