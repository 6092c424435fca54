#pragma once

// Shared helpers for the unit tests: a seeded value generator for the
// hand-rolled property tests and a few brute-force oracles that avoid the
// library code they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace testing {

struct Gen {
    explicit Gen(std::uint64_t seed) : eng(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
    bool coin() { return integer(0, 1) == 1; }
    std::mt19937_64 eng;
};

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Inverse normal cdf by bisection.
inline double inv_Phi(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double m = 0.5 * (lo + hi);
        (Phi(m) < p ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// Discounted payoff integrated against the lognormal density of the forward,
// split at the kink so the integrand is smooth on each piece.
inline double lognormal_option_oracle(double k, double tau, int omega, double fwd, double df,
                                      double sigma) {
    const double s = sigma * std::sqrt(tau);
    const double strike = fwd * std::exp(k);
    const double kink = (k + 0.5 * s * s) / s;
    auto payoff = [&](double z) {
        const double st = fwd * std::exp(s * z - 0.5 * s * s);
        return std::max(omega * (st - strike), 0.0) * phi(z);
    };
    const double lo = -40.0, hi = 40.0;
    if (omega == 1) return df * simpson(payoff, std::max(kink, lo), hi, 40000);
    return df * simpson(payoff, lo, std::min(kink, hi), 40000);
}

// Student t cdf by Simpson integration of the density between x and 0.
inline double t_cdf_oracle(double x, double nu) {
    const double norm = std::exp(std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu)) /
                        std::sqrt(nu * std::numbers::pi);
    auto density = [&](double u) { return norm * std::pow(1.0 + u * u / nu, -0.5 * (nu + 1)); };
    const double half = simpson(density, std::min(x, 0.0), std::max(x, 0.0), 20000);
    return x < 0.0 ? 0.5 - half : 0.5 + half;
}

inline double t_quantile_oracle(double p, double nu) {
    double lo = -200.0, hi = 200.0;
    for (int i = 0; i < 100; ++i) {
        const double m = 0.5 * (lo + hi);
        (t_cdf_oracle(m, nu) < p ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
}

struct McEstimate {
    double mean;
    double std_error;
};

// Heston call by conditional Monte Carlo: the variance path is simulated
// (full-truncation Euler, antithetic pairs) and, given the path, log S_T is
// Gaussian, so the call is a Black-Scholes price with an adjusted forward
// and variance. Zero rates.
inline McEstimate heston_call_mc_oracle(double kappa, double theta, double xi, double rho,
                                        double s0, double v0, double strike, double tau,
                                        int pairs, int steps, std::uint64_t seed) {
    Gen g(seed);
    const double dt = tau / steps, sq = std::sqrt(dt);
    auto bs_call = [](double fwd, double k, double var) {
        if (var <= 0.0) return std::max(fwd - k, 0.0);
        const double sd = std::sqrt(var);
        const double d1 = (std::log(fwd / k) + 0.5 * var) / sd;
        return fwd * Phi(d1) - k * Phi(d1 - sd);
    };
    std::vector<double> z(steps);
    double sum = 0.0, sum2 = 0.0;
    for (int p = 0; p < pairs; ++p) {
        for (auto& x : z) x = g.normal();
        double pair = 0.0;
        for (int sign : {1, -1}) {
            double v = v0, integral_v = 0.0, stoch = 0.0;
            for (int i = 0; i < steps; ++i) {
                const double vp = std::max(v, 0.0);
                const double dw = sign * z[i] * sq;
                integral_v += vp * dt;
                stoch += std::sqrt(vp) * dw;
                v += kappa * (theta - vp) * dt + xi * std::sqrt(vp) * dw;
            }
            const double fwd = s0 * std::exp(rho * stoch - 0.5 * rho * rho * integral_v);
            pair += 0.5 * bs_call(fwd, strike, (1.0 - rho * rho) * integral_v);
        }
        sum += pair;
        sum2 += pair * pair;
    }
    const double mean = sum / pairs;
    const double var = (sum2 / pairs - mean * mean) * pairs / (pairs - 1.0);
    return {mean, std::sqrt(var / pairs)};
}

}  // namespace testing
