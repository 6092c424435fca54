#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace imargin::est {

// current: sigma_s = EWMA_s (includes r_s); lagged: sigma_s = EWMA_{s-1}.
enum class Convention { current, lagged };

struct EwmaConfig {
    double lambda = 0.97;
    double floor = 0.0;
    Convention convention = Convention::lagged;
    double step = 1.0;  // return horizon h_r in years; output is divided by sqrt(step)
    std::optional<double> seed;  // EWMA before the first return; |r_0| if unset
};

// EWMA_s = sqrt((1 - lambda) r_s^2 + lambda EWMA_{s-1}^2), one value per
// return under the configured convention, floored then annualized.
std::vector<double> ewma_vol(std::span<const double> returns, const EwmaConfig& cfg);

// EWMA after the last return: the volatility forecast for the next step.
double ewma_forecast(std::span<const double> returns, const EwmaConfig& cfg);

// EWMA covariance over the product of EWMA volatilities (zero-mean returns),
// clamped to [-1, 1]; initialised with the first products.
std::vector<double> ewma_corr(std::span<const double> a, std::span<const double> b,
                              double lambda);

struct FactorEstimate {
    double factor = 0.0;
    std::vector<std::string> warnings;
};

// multiplier times the type-7 `level` quantile of the ratio history.
FactorEstimate volofvol_factor(std::span<const double> ratios, double multiplier = 1.1,
                               double level = 0.9);

}  // namespace imargin::est
