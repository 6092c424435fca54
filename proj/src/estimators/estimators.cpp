#include "imargin/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "imargin/errors.hpp"
#include "imargin/stats.hpp"

namespace imargin::est {

namespace {

void check(const EwmaConfig& cfg) {
    if (!(cfg.lambda > 0.0 && cfg.lambda < 1.0)) throw DomainError("EWMA lambda must lie in (0,1)");
    if (!(cfg.floor >= 0.0)) throw DomainError("EWMA floor must be non-negative");
    if (!(cfg.step > 0.0)) throw DomainError("EWMA return step must be positive");
}

// Raw recursion: out[s] = EWMA_s, plus the seed EWMA_{-1}.
std::vector<double> recurse(std::span<const double> r, const EwmaConfig& cfg, double& seed) {
    if (r.empty()) throw InsufficientData("EWMA of an empty series");
    check(cfg);
    seed = cfg.seed ? *cfg.seed : std::abs(r[0]);
    std::vector<double> out(r.size());
    double prev = seed;
    for (std::size_t s = 0; s < r.size(); ++s) {
        prev = std::sqrt((1.0 - cfg.lambda) * r[s] * r[s] + cfg.lambda * prev * prev);
        out[s] = prev;
    }
    return out;
}

}  // namespace

std::vector<double> ewma_vol(std::span<const double> returns, const EwmaConfig& cfg) {
    double seed = 0.0;
    const auto raw = recurse(returns, cfg, seed);
    const double scale = 1.0 / std::sqrt(cfg.step);
    std::vector<double> out(raw.size());
    for (std::size_t s = 0; s < raw.size(); ++s) {
        double v = raw[s];
        if (cfg.convention == Convention::lagged) v = s == 0 ? seed : raw[s - 1];
        out[s] = std::max(v, cfg.floor) * scale;
    }
    return out;
}

double ewma_forecast(std::span<const double> returns, const EwmaConfig& cfg) {
    double seed = 0.0;
    const auto raw = recurse(returns, cfg, seed);
    return std::max(raw.back(), cfg.floor) / std::sqrt(cfg.step);
}

std::vector<double> ewma_corr(std::span<const double> a, std::span<const double> b,
                              double lambda) {
    if (a.size() != b.size()) throw DomainError("EWMA correlation: series lengths differ");
    if (a.empty()) throw InsufficientData("EWMA correlation of empty series");
    if (!(lambda > 0.0 && lambda < 1.0)) throw DomainError("EWMA lambda must lie in (0,1)");
    std::vector<double> out(a.size());
    double cov = a[0] * b[0], va = a[0] * a[0], vb = b[0] * b[0];
    for (std::size_t s = 0; s < a.size(); ++s) {
        if (s > 0) {
            cov = (1.0 - lambda) * a[s] * b[s] + lambda * cov;
            va = (1.0 - lambda) * a[s] * a[s] + lambda * va;
            vb = (1.0 - lambda) * b[s] * b[s] + lambda * vb;
        }
        if (!(va > 0.0 && vb > 0.0)) {
            std::ostringstream msg;
            msg << "EWMA correlation undefined at index " << s << ": zero variance";
            throw NumericalError(msg.str());
        }
        out[s] = std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
    }
    return out;
}

FactorEstimate volofvol_factor(std::span<const double> ratios, double multiplier, double level) {
    if (ratios.empty()) throw InsufficientData("vol-of-vol factor from an empty history");
    FactorEstimate out;
    if (ratios.size() < 250) {
        std::ostringstream msg;
        msg << "vol-of-vol factor from only " << ratios.size() << " observation"
            << (ratios.size() == 1 ? "" : "s");
        out.warnings.push_back(msg.str());
    }
    out.factor = multiplier * quantile(std::vector<double>(ratios.begin(), ratios.end()), level);
    return out;
}

}  // namespace imargin::est
