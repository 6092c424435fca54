#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "imargin/dates.hpp"
#include "imargin/portfolio.hpp"

namespace imargin::heston {

// dS = alpha S dt + sqrt(v) S dW0, dv = kappa (theta - v) dt + xi sqrt(v) dW,
// d<W0, W> = rho dt. Rates are zero: forward = spot, discount = 1.
struct HestonParams {
    double kappa = 6.169;
    double theta = 0.16168 * 0.16168;
    double xi = 0.477;
    double rho = -0.781;
    double alpha = 0.0;
    double s0 = 2054.0;
    double v0 = 0.15562 * 0.15562;
    double dt = 0.1 / 365.0;  // Euler step, years

    // S&P 500 calibration of December 2015 with S0 = 2054, sqrt(v0) = 0.15562.
    static HestonParams reference();
    void validate() const;
};

enum class Scheme { arithmetic, log };

struct HestonPath {
    std::vector<double> spot;      // day 0 .. n_days
    std::vector<double> variance;  // max(v, 0) at the same days
    std::size_t truncated_steps = 0;  // fine steps that left v negative
    std::size_t steps = 0;
};

// Full-truncation Euler on the fine grid dt, sampled every `day` years.
// S_{t+dt} = S_t (1 + alpha dt + sqrt(v+ dt) X0) (arithmetic) or the
// log-Euler step; v_{t+dt} = v_t + kappa (theta - v+) dt + xi sqrt(v+ dt) X.
HestonPath simulate_paths(const HestonParams& params, std::size_t n_days, std::uint64_t seed,
                          std::uint64_t stream = 0, Scheme scheme = Scheme::arithmetic,
                          double day = 1.0 / 365.0);

// `date,spot,variance` with consecutive calendar dates from `start`.
void write_history_csv(std::ostream& out, const HestonPath& path, Date start);
HestonPath read_history_csv(std::istream& in);

// Characteristic function of log(S_tau / S_0) in the "little trap" form,
// which keeps the complex logarithm on its principal branch.
std::complex<double> log_spot_cf(const HestonParams& params, double v, double tau,
                                 std::complex<double> u);

struct PriceOptions {
    double abs_tol = 1e-10;  // on the integral, in units of the spot
    int max_depth = 40;
};

// Undiscounted call from Lewis' single-integral formula,
// C = S - sqrt(S K) / pi * int_0^inf Re[e^{i u log(S/K)} phi(u - i/2)] / (u^2 + 1/4) du,
// integrated with adaptive Gauss-Legendre after mapping [0, inf) to [0, 1).
double heston_call_price(const HestonParams& params, double strike, double tau,
                         const PriceOptions& options = {});
double heston_call_price(const HestonParams& params, double spot, double variance, double strike,
                         double tau, const PriceOptions& options = {});
// Puts by parity under zero rates.
double heston_price(const HestonParams& params, double spot, double variance, int omega,
                    double strike, double tau, const PriceOptions& options = {});

// Portfolio value at (spot, variance); spot lines are worth quantity * spot.
double portfolio_value(const HestonParams& params, const Portfolio& portfolio, double spot,
                       double variance);

using StatePricer = std::function<double(const Portfolio&, double spot, double variance)>;

struct Sensitivities {
    double d_spot = 0.0;
    double d_variance = 0.0;
    std::vector<std::string> warnings;
};

// Central differences (Pi(s + e) - Pi(s - e)) / 2e in spot and variance.
// eps_v is halved until v - eps_v > 0, with a warning.
Sensitivities fd_portfolio_sensitivities(const StatePricer& pricer, const Portfolio& portfolio,
                                         double spot, double variance, double eps_s, double eps_v);

// Phi^{-1}(1 - theta) sqrt(s^2 v dS^2 + xi^2 v dv^2 + 2 rho xi s v dS dv) sqrt(h).
double sv_var(const Sensitivities& sens, double spot, double variance, const HestonParams& params,
              double theta, double h);

}  // namespace imargin::heston
