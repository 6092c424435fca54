#include <algorithm>
#include <cmath>

#include "imargin/errors.hpp"
#include "imargin/marketdata.hpp"

namespace imargin::market {

namespace {

// Piecewise-linear in tau through (0, 0) and the pillar values, extending
// the last segment beyond the final pillar.
double interp_from_zero(const std::vector<Pillar>& pillars, const std::vector<double>& ys,
                        double tau) {
    if (pillars.empty() || tau <= 0.0) return 0.0;
    double t0 = 0.0, y0 = 0.0;
    for (std::size_t i = 0; i < pillars.size(); ++i) {
        const double t1 = pillars[i].tau, y1 = ys[i];
        if (tau <= t1 || i + 1 == pillars.size())
            return y0 + (y1 - y0) * (tau - t0) / (t1 - t0);
        t0 = t1;
        y0 = y1;
    }
    return y0;
}

}  // namespace

TermStructure::TermStructure(double spot, std::vector<Pillar> pillars)
    : spot_(spot), pillars_(std::move(pillars)) {
    if (!(spot_ > 0.0) || !std::isfinite(spot_)) throw DomainError("spot must be positive");
    std::sort(pillars_.begin(), pillars_.end(),
              [](const Pillar& a, const Pillar& b) { return a.tau < b.tau; });
    for (std::size_t i = 0; i < pillars_.size(); ++i) {
        const auto& p = pillars_[i];
        if (!(p.tau > 0.0) || !(p.discount > 0.0) || !(p.forward > 0.0) ||
            !std::isfinite(p.tau) || !std::isfinite(p.discount) || !std::isfinite(p.forward))
            throw DomainError("term structure pillar must have positive tau, DF and forward");
        if (i > 0 && p.tau == pillars_[i - 1].tau)
            throw DomainError("duplicate term structure pillar");
        log_df_.push_back(std::log(p.discount));
        log_f_.push_back(std::log(p.forward / spot_));
    }
}

TermStructure TermStructure::flat(double spot, double rate, double dividend) {
    // Two pillars pin the constant rates; the extension keeps them constant.
    std::vector<Pillar> pillars;
    if (rate != 0.0 || dividend != 0.0) {
        for (double t : {1.0, 2.0})
            pillars.push_back({t, std::exp(-rate * t), spot * std::exp((rate - dividend) * t)});
    }
    return TermStructure(spot, std::move(pillars));
}

double TermStructure::discount(double tau) const {
    return std::exp(interp_from_zero(pillars_, log_df_, tau));
}

double TermStructure::forward_ratio(double tau) const {
    return std::exp(interp_from_zero(pillars_, log_f_, tau));
}

double TermStructure::forward(double tau) const { return spot_ * forward_ratio(tau); }

TermStructure TermStructure::with_spot(double spot) const {
    std::vector<Pillar> scaled = pillars_;
    for (auto& p : scaled) p.forward *= spot / spot_;
    return TermStructure(spot, std::move(scaled));
}

}  // namespace imargin::market
