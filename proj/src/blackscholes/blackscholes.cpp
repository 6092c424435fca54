#include "imargin/blackscholes.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "imargin/errors.hpp"
#include "imargin/normal.hpp"

namespace imargin::bs {

namespace {

void validate(const QuoteContext& ctx, bool need_sigma) {
    auto bad = [](double x) { return !std::isfinite(x); };
    if (bad(ctx.k) || bad(ctx.tau) || bad(ctx.forward) || bad(ctx.discount) ||
        bad(ctx.sigma))
        throw DomainError("black-scholes input is not finite");
    if (ctx.tau < 0.0) throw DomainError("negative time to maturity");
    if (ctx.forward <= 0.0) throw DomainError("forward must be positive");
    if (ctx.discount <= 0.0) throw DomainError("discount factor must be positive");
    if (ctx.omega != 1 && ctx.omega != -1) throw DomainError("omega must be +1 or -1");
    if (ctx.sigma < 0.0) throw DomainError("negative volatility");
    if (need_sigma && (ctx.sigma == 0.0 || ctx.tau == 0.0))
        throw DomainError("greeks are undefined at zero volatility or maturity");
}

// Out-of-the-money normalized price: call for k >= 0, put for k < 0.
double normalized_otm(double k, double s) {
    if (s <= 0.0) return 0.0;
    const double a = -k / s;
    const double h = 0.5 * s;
    if (k >= 0.0) return norm_cdf(a + h) - std::exp(k) * norm_cdf(a - h);
    return std::exp(k) * norm_cdf(-(a - h)) - norm_cdf(-(a + h));
}

}  // namespace

double d1(double k, double total_sd) { return -k / total_sd + 0.5 * total_sd; }

double normalized_intrinsic(double k) { return k < 0.0 ? -std::expm1(k) : 0.0; }

double normalized_call(double k, double total_sd) {
    return normalized_intrinsic(k) + std::max(normalized_otm(k, total_sd), 0.0);
}

double normalized_vega(double k, double total_sd) {
    if (total_sd <= 0.0) return 0.0;
    return norm_pdf(d1(k, total_sd));
}

double price(const QuoteContext& ctx) {
    validate(ctx, false);
    const double s = ctx.sigma * std::sqrt(ctx.tau);
    const double otm = std::max(normalized_otm(ctx.k, s), 0.0);
    // The out-of-the-money leg is priced directly; the other by parity.
    double norm;
    if (ctx.omega == 1)
        norm = ctx.k >= 0.0 ? otm : normalized_intrinsic(ctx.k) + otm;
    else
        norm = ctx.k < 0.0 ? otm : std::expm1(ctx.k) + otm;
    return ctx.discount * ctx.forward * norm;
}

double implied_vol_normalized(double call, double k, double tau) {
    if (!std::isfinite(call) || !std::isfinite(k) || !(tau > 0.0))
        throw DomainError("implied vol: invalid input");
    const double lower = normalized_intrinsic(k);
    if (call <= lower) {
        std::ostringstream msg;
        msg << "implied vol: price " << call << " at or below intrinsic " << lower;
        throw BoundViolation(BoundSide::below_intrinsic, msg.str());
    }
    if (call >= 1.0) {
        std::ostringstream msg;
        msg << "implied vol: price " << call << " at or above upper bound 1";
        throw BoundViolation(BoundSide::above_upper, msg.str());
    }
    const double target = call - lower;  // time value = OTM price
    const double sqrt_tau = std::sqrt(tau);

    double lo = 1e-8 * sqrt_tau, hi = 5.0 * sqrt_tau;
    while (normalized_otm(k, hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e4) throw NumericalError("implied vol: no volatility reaches the price");
    }
    if (normalized_otm(k, lo) >= target) return lo / sqrt_tau;

    // Newton from the inflection point of s -> price converges monotonically;
    // bisection takes over whenever a step leaves the bracket.
    double s = std::clamp(std::sqrt(2.0 * std::abs(k)), lo, hi);
    if (k == 0.0) s = std::clamp(2.5066282746310002 * target, lo, hi);
    for (int iter = 0; iter < 100; ++iter) {
        const double f = normalized_otm(k, s) - target;
        if (f == 0.0) break;
        if (f < 0.0)
            lo = s;
        else
            hi = s;
        const double v = normalized_vega(k, s);
        double next = v > 0.0 ? s - f / v : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) <= 1e-15 * s) {
            s = next;
            break;
        }
        s = next;
    }
    return s / sqrt_tau;
}

double implied_vol(double price_value, const QuoteContext& ctx) {
    QuoteContext c = ctx;
    c.sigma = 0.0;
    validate(c, false);
    if (c.tau == 0.0) throw DomainError("implied vol needs a positive maturity");
    const double scale = c.discount * c.forward;
    double norm = price_value / scale;
    if (c.omega == -1) {
        // Put bounds: (e^k - 1)^+ <= p <= e^k; map to the call by parity.
        const double upper = std::exp(c.k);
        if (norm >= upper) {
            std::ostringstream msg;
            msg << "implied vol: put price " << price_value << " at or above upper bound "
                << upper * scale;
            throw BoundViolation(BoundSide::above_upper, msg.str());
        }
        norm = norm - std::expm1(c.k);
    }
    return implied_vol_normalized(norm, c.k, c.tau);
}

Greeks greeks(const QuoteContext& ctx) {
    validate(ctx, true);
    const double sqrt_tau = std::sqrt(ctx.tau);
    const double d = d1(ctx.k, ctx.sigma * sqrt_tau);
    const double w = static_cast<double>(ctx.omega);
    return {w * norm_cdf(w * d), ctx.discount * ctx.forward * norm_pdf(d) * sqrt_tau};
}

double k_from_delta(double delta, double tau, double sigma) {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0,1)");
    const double s = sigma * std::sqrt(tau);
    return -norm_inv(delta) * s + 0.5 * s * s;
}

}  // namespace imargin::bs
