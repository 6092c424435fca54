#include "imargin/shortterm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <mutex>

#include <boost/math/distributions/students_t.hpp>

#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "imargin/normal.hpp"
#include "imargin/parallel.hpp"
#include "imargin/random.hpp"
#include "imargin/stats.hpp"
#include "imargin/valuation.hpp"

namespace imargin::shortterm {

namespace {

constexpr std::size_t block_size = 4096;

double radicand(double c, double q, double rho) {
    return std::max(c * c + q * q + 2.0 * rho * c * q, 0.0);
}

void check_theta(double theta) {
    if (!(theta > 0.5 && theta < 1.0)) throw DomainError("confidence level must be in (0.5, 1)");
}

void check_nu(double nu) {
    if (!(nu > 2.0)) throw DomainError("t degrees of freedom must exceed 2");
}

struct Draws {
    std::vector<double> x;  // standard normal
    std::vector<double> y;  // t(nu)
};

Draws make_draws(double nu, std::size_t n, std::uint64_t seed) {
    Draws d{std::vector<double>(n), std::vector<double>(n)};
    const boost::math::students_t_distribution<double> t(nu);
    const std::size_t blocks = (n + block_size - 1) / block_size;
    parallel_for(blocks, [&](std::size_t b) {
        Rng rng(seed, b);
        const std::size_t end = std::min(n, (b + 1) * block_size);
        for (std::size_t i = b * block_size; i < end; ++i) {
            d.x[i] = rng.normal();
            const double n_y = rng.normal();
            // Upper half through symmetry keeps the tail argument away from 1.
            const double u = norm_cdf(-std::abs(n_y));
            const double tail = u > 0.0 ? boost::math::quantile(t, u)
                                        : -std::numeric_limits<double>::max();
            d.y[i] = n_y < 0.0 ? tail : -tail;
        }
    });
    return d;
}

// The t inverse cdf dominates the cost, and callers often reuse one
// (nu, n, seed) triple, so the last few draw sets are kept.
std::shared_ptr<const Draws> draws(double nu, std::size_t n, std::uint64_t seed) {
    check_nu(nu);
    struct Entry {
        double nu;
        std::size_t n;
        std::uint64_t seed;
        std::shared_ptr<const Draws> draws;
    };
    static std::mutex mutex;
    static std::deque<Entry> cache;
    {
        std::lock_guard lock(mutex);
        for (const auto& e : cache)
            if (e.nu == nu && e.n == n && e.seed == seed) return e.draws;
    }
    auto fresh = std::make_shared<const Draws>(make_draws(nu, n, seed));
    std::lock_guard lock(mutex);
    cache.push_back({nu, n, seed, fresh});
    if (cache.size() > 4) cache.pop_front();
    return fresh;
}

double interp_column(const std::vector<double>& ks, const std::vector<double>& vs, double k) {
    if (k <= ks.front()) return vs.front();
    if (k >= ks.back()) return vs.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(ks.begin(), ks.end(), k) - ks.begin());
    const std::size_t lo = hi - 1;
    const double w = (k - ks[lo]) / (ks[hi] - ks[lo]);
    return vs[lo] + w * (vs[hi] - vs[lo]);
}

}  // namespace

ExposureCoeffs exposure_coeffs(const Portfolio& portfolio, double spot,
                               const market::VolSurface& surface, const ShortTermParams& params) {
    if (!(spot > 0.0)) throw DomainError("spot must be positive");
    if (params.beta < 0.0) throw DomainError("spot vol must be non-negative");
    double spot_delta = 0.0, skew_vega = 0.0, q = 0.0;
    for (const auto& p : portfolio) {
        if (p.kind == Instrument::spot) {
            spot_delta += p.quantity;
            continue;
        }
        if (!is_option(p.kind) || p.quantity == 0.0) continue;
        if (!(p.tau > 0.0)) throw DomainError("position '" + p.label + "' has expired");
        const auto ctx = quote_context(p, surface);
        if (!(ctx.sigma > 0.0))
            throw DomainError("no positive implied volatility for position '" + p.label + "'");
        const auto g = bs::greeks(ctx);
        // dPrice/dS: the forward moves one-for-one with the spot in relative terms.
        spot_delta += p.quantity * ctx.discount * ctx.forward / spot * g.delta;
        skew_vega += p.quantity * g.vega * surface.smile_slope(p.tau, ctx.k);
        const double zeta = params.zeta_of ? params.zeta_of(ctx.k, p.tau) : 0.0;
        if (!(zeta >= 0.0) || !std::isfinite(zeta))
            throw DomainError("invalid vol-of-vol for position '" + p.label + "'");
        q += p.quantity * zeta * g.vega;
    }
    return {params.beta * (spot * spot_delta - skew_vega), q};
}

double gaussian_var(const ExposureCoeffs& coeffs, const ShortTermParams& params) {
    check_theta(params.theta);
    if (!(params.h >= 0.0)) throw DomainError("margin period must be non-negative");
    return norm_inv(1.0 - params.theta) * std::sqrt(radicand(coeffs.c, coeffs.q, params.rho)) *
           std::sqrt(params.h);
}

std::vector<double> sample_Z(double c, double q, double rho, double nu, std::size_t n,
                             std::uint64_t seed) {
    if (n == 0) throw DomainError("sample_Z needs at least one draw");
    if (!(rho >= -1.0 && rho <= 1.0)) throw DomainError("correlation outside [-1, 1]");
    const double scale = std::sqrt(radicand(c, q, rho));
    if (!(scale > 0.0))
        throw DomainError("sample_Z: c^2 + q^2 + 2 rho c q is zero, the VaR is zero");
    const auto d = draws(nu, n, seed);
    const auto& x = d->x;
    const auto& y = d->y;
    const double a = q * std::sqrt(1.0 - rho * rho) / scale;
    const double b = (c + q * rho) / scale;
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
    return z;
}

double tstudent_var(const ExposureCoeffs& coeffs, const ShortTermParams& params,
                    std::size_t n_draws, std::uint64_t seed) {
    check_theta(params.theta);
    check_nu(params.nu);
    const double scale = std::sqrt(radicand(coeffs.c, coeffs.q, params.rho));
    if (!(scale > 0.0)) return 0.0;
    // Z and -Z have the same law; sampling in a canonical sign makes the
    // estimate exactly symmetric in the portfolio sign.
    const double b = coeffs.c + coeffs.q * params.rho;
    const double sign = (b < 0.0 || (b == 0.0 && coeffs.q < 0.0)) ? -1.0 : 1.0;
    auto z = sample_Z(sign * coeffs.c, sign * coeffs.q, params.rho, params.nu, n_draws, seed);
    return quantile(std::move(z), 1.0 - params.theta) * scale * std::sqrt(params.h);
}

ZQuantileTable::ZQuantileTable(double nu, double level, std::size_t n_draws, std::uint64_t seed,
                               std::size_t points)
    : nu_(nu), level_(level) {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("quantile level outside (0, 1)");
    if (points < 2 || n_draws == 0) throw DomainError("quantile table needs draws and 2+ points");
    const auto d = draws(nu, n_draws, seed);
    const auto& x = d->x;
    const auto& y = d->y;
    values_.assign(points, 0.0);
    parallel_for(points, [&](std::size_t j) {
        const double b = static_cast<double>(j) / static_cast<double>(points - 1);
        const double a = std::sqrt(std::max(1.0 - b * b, 0.0));
        std::vector<double> z(n_draws);
        for (std::size_t i = 0; i < n_draws; ++i) z[i] = a * x[i] + b * y[i];
        values_[j] = imargin::quantile(std::move(z), level);
    });
}

double ZQuantileTable::quantile(double b) const {
    const double pos = std::min(std::abs(b), 1.0) * static_cast<double>(values_.size() - 1);
    const auto lo = std::min(static_cast<std::size_t>(pos), values_.size() - 2);
    const double w = pos - static_cast<double>(lo);
    return values_[lo] + w * (values_[lo + 1] - values_[lo]);
}

double ZQuantileTable::var(const ExposureCoeffs& coeffs, double rho, double h) const {
    const double scale = std::sqrt(radicand(coeffs.c, coeffs.q, rho));
    if (!(scale > 0.0)) return 0.0;
    return quantile((coeffs.c + coeffs.q * rho) / scale) * scale * std::sqrt(h);
}

VolOfVolLattice::VolOfVolLattice(market::Lattice lattice, std::vector<std::vector<double>> factors,
                                 double atm_volofvol)
    : lattice_(std::move(lattice)), factors_(std::move(factors)), atm_(atm_volofvol) {
    if (factors_.size() != lattice_.taus.size()) throw DomainError("factor rows != maturities");
    for (std::size_t j = 0; j < factors_.size(); ++j)
        if (factors_[j].size() != lattice_.ks[j].size() || factors_[j].empty())
            throw DomainError("factor column size does not match the lattice");
    if (!(atm_ >= 0.0)) throw DomainError("ATM vol-of-vol must be non-negative");
}

double VolOfVolLattice::factor(double k, double tau) const {
    const auto& ts = lattice_.taus;
    auto at = [&](std::size_t j) { return interp_column(lattice_.ks[j], factors_[j], k); };
    if (tau <= ts.front()) return at(0);
    if (tau >= ts.back()) return at(ts.size() - 1);
    const auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), tau) - ts.begin());
    const std::size_t lo = hi - 1;
    const double w = (tau - ts[lo]) / (ts[hi] - ts[lo]);
    return (1.0 - w) * at(lo) + w * at(hi);
}

}  // namespace imargin::shortterm
