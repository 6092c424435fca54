#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imargin/marketdata.hpp"
#include "imargin/portfolio.hpp"

namespace imargin::affine {

// How G_0 and G are evaluated away from the lattice nodes.
//   interpolate: per maturity, a Floater-Hormann rational interpolant in k
//     (order 3, linear in the node values); linear in tau between maturities.
//   regression: the normalized price of every historical day is read off that
//     day's implied-vol surface, then regressed on the factor history; the
//     intercept is G_0 and the slopes are G.
// Both are exactly affine in xi. Outside the lattice hull values are held
// flat and flagged.
enum class Extension { interpolate, regression };

const char* to_string(Extension e);

// Normalized call prices c(tau, k) = G_0(tau, k) + G(tau, k) . xi.
class FactorSurfaces {
public:
    struct Point {
        double g0 = 0.0;
        Eigen::VectorXd g;
        bool extrapolated = false;
    };

    FactorSurfaces() = default;
    // g0: one value per node (Lattice::flat order); g: nodes x d.
    FactorSurfaces(market::Lattice lattice, Eigen::VectorXd g0, Eigen::MatrixXd g);
    // With the calibration history (days x d factors, days x nodes prices).
    FactorSurfaces(market::Lattice lattice, Eigen::VectorXd g0, Eigen::MatrixXd g,
                   Eigen::MatrixXd xi_history, Eigen::MatrixXd price_history,
                   Extension extension = Extension::regression);

    std::size_t dim() const;
    const market::Lattice& lattice() const;
    const Eigen::VectorXd& g0() const;
    const Eigen::MatrixXd& g() const;
    const Eigen::MatrixXd& xi_history() const;
    const Eigen::MatrixXd& price_history() const;
    Extension extension() const;

    Point at(double tau, double k) const;
    double price(const Eigen::VectorXd& xi, double tau, double k) const;
    bool in_tau_hull(double tau) const;

private:
    struct Impl;
    const Impl& impl() const;
    std::shared_ptr<const Impl> impl_;
};

struct Dynamics {
    double alpha = 0.0;  // spot drift, per year
    double beta = 0.0;   // spot vol, per sqrt(year)
    Eigen::VectorXd mu;      // factor drift, per year
    Eigen::MatrixXd sigma;   // factor diffusion, d x d
};

struct Correlation {
    Eigen::VectorXd p_s_xi;  // spot / factor driver correlations
    Eigen::MatrixXd p_xi;    // factor driver correlations
};

struct AffineModel {
    FactorSurfaces surfaces;
    market::TermStructure term;  // today's spot, discounts and forwards
    Eigen::VectorXd xi;          // today's factor values
    Dynamics dyn;
    Correlation corr;

    std::size_t dim() const { return surfaces.dim(); }
    double spot() const { return term.spot(); }
    // Shapes, beta >= 0 and a positive semi-definite (1 + d) correlation matrix.
    void validate() const;
};

double price_surface(const AffineModel& model, const Eigen::VectorXd& xi, double tau, double k);

// --- calibration --------------------------------------------------------

struct Calibration {
    FactorSurfaces surfaces;
    Eigen::MatrixXd xi_history;      // days x d
    Eigen::VectorXd singular_values; // of the centred price history
    double mape = 0.0;               // mean |reconstructed - price| / |price|, after repair
    std::size_t repaired_constraints = 0;  // (day, constraint) pairs the repair had to enforce
    std::vector<std::string> warnings;
};

// G_0 is the column mean of the price history (days x nodes, normalized
// calls), G the top-d right singular vectors of the residuals with the first
// nonzero component positive, xi the residual projections. Throws
// InsufficientData unless days > d and DomainError when d exceeds the
// numerical rank of the residuals.
// With repair, (G_0, G) then move to the nearest values (Frobenius norm, xi
// held) for which every historical reconstruction is within the price bounds,
// decreasing and convex in strike and non-decreasing in maturity.
Calibration calibrate_factors(const market::Lattice& lattice, const Eigen::MatrixXd& price_history,
                              std::size_t d, Extension extension = Extension::regression,
                              bool repair = true);

// Arbitrage violations of the reconstructed surfaces over the calibration
// history, summed over days.
std::size_t history_arbitrage_violations(const FactorSurfaces& surfaces);

struct DynamicsEstimate {
    Dynamics dyn;
    Correlation corr;
    std::vector<std::string> warnings;
};

struct DynamicsOptions {
    double lambda = 0.97;  // EWMA decay for beta
};

// Moment estimators from aligned daily histories sampled every h_r years:
// beta is the EWMA forecast of the spot log-return vol, alpha the mean
// log-return over h_r plus beta^2 / 2, mu the mean factor increment over h_r,
// sigma the symmetric square root of the increment covariance over h_r.
// Drivers are then the whitened increments, so p_xi = I and p_s_xi holds the
// sample correlations of the spot return with them. Directions of zero
// increment variance get no diffusion and no correlation (with a warning).
DynamicsEstimate estimate_dynamics(const std::vector<double>& spot_history,
                                   const Eigen::MatrixXd& xi_history, double h_r,
                                   const DynamicsOptions& options = {});

// Nearest correlation matrix in Frobenius norm (alternating projections with
// Dykstra's correction).
Eigen::MatrixXd nearest_correlation(const Eigen::MatrixXd& a, double tol = 1e-12,
                                    int max_iter = 1000);

// --- P&L representation -------------------------------------------------

// Law of S_{t+h}: lognormal (Euler scheme in log), normal increments, or
// S_t (1 + alpha h + beta T) with T a t-variable of variance h.
enum class SpotLaw { lognormal, normal, tstudent };

struct ConditionalMoments {
    Eigen::VectorXd m;        // mean of xi_{t+h} - xi_t given S_{t+h} = s
    Eigen::MatrixXd v;        // its covariance, h (sigma b)(sigma b)^T
    Eigen::MatrixXd b_factor; // b with b b^T = p_xi - p_s_xi p_s_xi^T
    std::vector<std::string> warnings;
};

// b is the symmetric square root with negative eigenvalues clipped at zero.
// The tstudent law uses the normal-increment mean.
ConditionalMoments conditional_moments(const AffineModel& model, double h, double s,
                                       SpotLaw law = SpotLaw::lognormal);

struct PnlPoint {
    double a = 0.0;
    Eigen::VectorXd b;
    double a_hat = 0.0;
    Eigen::VectorXd b_hat;
    bool extrapolated = false;
};

// P&L = A(h, s) + B(h, s) . (xi_{t+h} - xi_t) with S_{t+h} = s, rates held
// and forwards scaling with the spot. Puts enter through put-call parity,
// spot lines as quantity times the spot move, cash lines not at all.
// A_hat = A + B . m(s), B_hat = sqrt(h) B sigma b.
class PnlCoeffs {
public:
    PnlCoeffs(const AffineModel& model, const Portfolio& portfolio, SpotLaw law = SpotLaw::lognormal);

    double value() const { return value_; }  // Pi_t
    // Throws DomainError when an option's tau - h leaves the lattice
    // maturities.
    PnlPoint operator()(double h, double s) const;
    // Portfolio value at (h, s, xi); counts normalized prices outside
    // [intrinsic, 1] into *bound_breaks when given.
    double value_at(double h, double s, const Eigen::VectorXd& xi,
                    std::size_t* bound_breaks = nullptr) const;

    const AffineModel& model() const { return *model_; }

private:
    const AffineModel* model_;
    Portfolio lines_;
    SpotLaw law_;
    double value_ = 0.0;
    Eigen::MatrixXd sigma_b_;
    Eigen::VectorXd sigma_p_;
};

// --- VaR ------------------------------------------------------------------

struct Exposure {
    double c = 0.0;
    double q = 0.0;
    double d_spot = 0.0;       // dPi/dS
    Eigen::VectorXd d_xi;      // dPi/dxi = B(0, S_t)
};

// c = S beta dPi/dS + B(0, S_t) sigma p_s_xi and q = |B(0, S_t) sigma b|, where
// dPi/dS sums pi DF f (c - dc/dk - 1_put) over the options (plus spot lines)
// and dc/dk is a central difference with step dk.
Exposure exposure(const AffineModel& model, const Portfolio& portfolio, double dk = 1e-4);

struct ClosedOptions {
    SpotLaw law = SpotLaw::lognormal;
    double nu = 5.0;
    std::size_t n_draws = 200000;  // t-quantile sampling
    std::uint64_t seed = 20240521;
    double dk = 1e-4;
};

// Phi^{-1}(1 - theta) sqrt(c^2 + q^2) sqrt(h); for the t law the Gaussian
// quantile becomes that of Z = (q X + c Y) / sqrt(c^2 + q^2), Y ~ t(nu).
double closed_var(const AffineModel& model, const Portfolio& portfolio, double theta, double h,
                  const ClosedOptions& options = {});

// The one-factor expression in terms of the portfolio sensitivities.
double closed_var_one_factor(const AffineModel& model, double d_spot, double d_xi, double theta,
                             double h);

struct QuasiOptions {
    SpotLaw law = SpotLaw::lognormal;  // lognormal or normal
    std::size_t nodes = 96;
    std::size_t max_nodes = 768;
    double tol = 1e-8;
};

struct QuasiResult {
    double var = 0.0;
    std::size_t nodes = 0;     // Gauss-Hermite nodes of the accepted solve
    double cdf_gap = 0.0;      // |P_n(v) - P_2n(v)|, or the adaptive error estimate
    bool adaptive = false;     // node doubling did not settle within max_nodes
};

// Solves 1 - theta = E[Phi((v - A_hat(h, s)) / |B_hat(h, s)|)] over S_{t+h}:
// Gauss-Hermite in the standardized spot shock, node count doubled until the
// probability at the root moves by less than tol, Brent on a bracket grown
// from the closed-formula value. A vanishing |B_hat| contributes 1{v >= A_hat}.
// If doubling has not settled at max_nodes, the probability is integrated
// adaptively on [-10, 10] instead; failure there throws NumericalError.
QuasiResult quasi_explicit_var(const AffineModel& model, const Portfolio& portfolio, double theta,
                               double h, const QuasiOptions& options = {});

struct OneStep {
    std::vector<double> spot;   // S_{t+h}
    Eigen::MatrixXd dxi;        // n x d, xi_{t+h} - xi_t
};

// Frozen-coefficient one-step draws: standardized spot shock y, factor
// increment mu h + sqrt(h) sigma (p_s_xi y + b z). Blocks of 4096 draws use
// their own sub-streams.
OneStep simulate_one_step(const AffineModel& model, double h, std::size_t n, std::uint64_t seed,
                          SpotLaw law = SpotLaw::lognormal, double nu = 5.0);

struct EmpiricalOptions {
    std::size_t n_sims = 100000;
    std::uint64_t seed = 20240607;
    SpotLaw law = SpotLaw::lognormal;
    double nu = 5.0;
};

struct EmpiricalResult {
    double var = 0.0;
    double std_error = 0.0;       // quantile standard error (Hall-Sheather sparsity)
    std::vector<double> pnl;
    std::size_t bound_breaks = 0; // simulated normalized prices outside [intrinsic, 1]
};

EmpiricalResult empirical_var(const AffineModel& model, const Portfolio& portfolio, double theta,
                              double h, const EmpiricalOptions& options = {});

// --- serialization --------------------------------------------------------

// Line-oriented text, comma separated, first field a tag:
//   imargin-affine,1
//   extension,<interpolate|regression>
//   spot,<S>            pillar,<tau>,<discount>,<forward>   (zero or more)
//   column,<tau>,<k_0>,...,<k_m>                             (per maturity)
//   g0,<node values>    g,<i>,<node values>                  (per factor)
//   xi,<values>         alpha,<a>   beta,<b>   mu,<values>
//   sigma,<row>,<values>   p_s_xi,<values>   p_xi,<row>,<values>
//   xi_history,<day>,<values>   price_history,<day>,<node values>
// Numbers are written as the shortest text that parses back exactly.
void write_model(std::ostream& out, const AffineModel& model);
AffineModel read_model(std::istream& in);

}  // namespace imargin::affine
