#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "imargin/marketdata.hpp"
#include "imargin/portfolio.hpp"

namespace imargin::shortterm {

struct ShortTermParams {
    double beta = 0.0;  // spot vol, per sqrt(year)
    double rho = 0.0;   // spot / implied-vol correlation
    double nu = 5.0;    // t degrees of freedom
    std::function<double(double k, double tau)> zeta_of;  // vol-of-vol per sqrt(year)
    double theta = 0.99;
    double h = 1.0 / 252.0;  // margin period, years
};

// c: exposure to the spot driver, q: exposure to the implied-vol driver.
// q is signed; it may be negative when long and short vega mix.
struct ExposureCoeffs {
    double c = 0.0;
    double q = 0.0;
};

// c = beta (S sum pi dPrice/dS - sum pi vega dsigma/dk), q = sum pi zeta vega,
// with Black-Scholes Greeks at each position's surface vol. Spot lines add
// beta S quantity to c; cash lines contribute nothing.
ExposureCoeffs exposure_coeffs(const Portfolio& portfolio, double spot,
                               const market::VolSurface& surface, const ShortTermParams& params);

// Phi^{-1}(1 - theta) sqrt(c^2 + q^2 + 2 rho c q) sqrt(h).
double gaussian_var(const ExposureCoeffs& coeffs, const ShortTermParams& params);

// Z = (q sqrt(1 - rho^2) X + (c + q rho) Y) / sqrt(c^2 + q^2 + 2 rho c q) with X
// standard normal and Y a t(nu) variable obtained as F_t^{-1}(Phi(N)) from a
// second normal N. Draws come in fixed blocks with their own sub-streams, so
// the sample does not depend on the worker count.
std::vector<double> sample_Z(double c, double q, double rho, double nu, std::size_t n,
                             std::uint64_t seed);

// Empirical (1 - theta)-quantile of Z times sqrt(c^2 + q^2 + 2 rho c q) sqrt(h);
// zero when the radicand vanishes.
double tstudent_var(const ExposureCoeffs& coeffs, const ShortTermParams& params,
                    std::size_t n_draws = 200000, std::uint64_t seed = 20240521);

// Z only depends on c, q, rho through b = (c + q rho) / sqrt(radicand):
// Z = sqrt(1 - b^2) X + b Y, and its law is even in b. The table holds the
// empirical quantile on an evenly spaced |b| grid, reusing one set of (X, Y)
// draws, and interpolates linearly between grid points.
class ZQuantileTable {
public:
    ZQuantileTable(double nu, double level, std::size_t n_draws = 200000,
                   std::uint64_t seed = 20240521, std::size_t points = 201);

    double nu() const { return nu_; }
    double level() const { return level_; }
    double quantile(double b) const;
    // Same result as tstudent_var with the table standing in for sampling.
    double var(const ExposureCoeffs& coeffs, double rho, double h) const;

private:
    double nu_;
    double level_;
    std::vector<double> values_;
};

// Vol-of-vol scale factors on the surface lattice; zeta(k, tau) is the
// interpolated factor times the one-month ATM vol-of-vol. Interpolation is
// linear in k within a maturity and linear in tau between maturities, flat
// outside the lattice.
class VolOfVolLattice {
public:
    VolOfVolLattice(market::Lattice lattice, std::vector<std::vector<double>> factors,
                    double atm_volofvol);

    double factor(double k, double tau) const;
    double operator()(double k, double tau) const { return atm_ * factor(k, tau); }
    const std::vector<std::vector<double>>& factors() const { return factors_; }
    double atm_volofvol() const { return atm_; }

private:
    market::Lattice lattice_;
    std::vector<std::vector<double>> factors_;
    double atm_;
};

}  // namespace imargin::shortterm
