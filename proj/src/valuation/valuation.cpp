#include "imargin/valuation.hpp"

#include <algorithm>
#include <cmath>

#include "imargin/errors.hpp"

namespace imargin {

bs::QuoteContext quote_context(const Position& p, const market::VolSurface& surface) {
    if (!is_option(p.kind)) throw DomainError("quote context of a non-option line");
    if (!(p.strike > 0.0)) throw DomainError("position '" + p.label + "' has no positive strike");
    bs::QuoteContext ctx;
    ctx.tau = p.tau;
    ctx.omega = omega(p.kind);
    ctx.forward = surface.forward(p.tau);
    ctx.discount = surface.discount(p.tau);
    ctx.k = std::log(p.strike / ctx.forward);
    ctx.sigma = surface.iv(p.tau, ctx.k);
    if (!std::isfinite(ctx.sigma) || ctx.sigma < 0.0)
        throw DomainError("no implied volatility for position '" + p.label + "'");
    return ctx;
}

double position_value(const Position& p, const market::VolSurface& surface) {
    switch (p.kind) {
    case Instrument::cash:
        return p.quantity;
    case Instrument::spot:
        return p.quantity * surface.spot();
    default:
        break;
    }
    if (p.quantity == 0.0) return 0.0;
    if (p.tau <= 0.0)
        return p.quantity * std::max(omega(p.kind) * (surface.spot() - p.strike), 0.0);
    return p.quantity * bs::price(quote_context(p, surface));
}

double portfolio_value(const Portfolio& portfolio, const market::VolSurface& surface) {
    double total = 0.0;
    for (const auto& p : portfolio) total += position_value(p, surface);
    return total;
}

}  // namespace imargin
