#pragma once

#include "imargin/blackscholes.hpp"
#include "imargin/marketdata.hpp"
#include "imargin/portfolio.hpp"

namespace imargin {

// Black-Scholes value of one line on a surface; options with no time left
// are worth their payoff at the surface spot.
double position_value(const Position& position, const market::VolSurface& surface);
double portfolio_value(const Portfolio& portfolio, const market::VolSurface& surface);

// Pricing inputs of an option line: log-moneyness, vol and term structure.
bs::QuoteContext quote_context(const Position& position, const market::VolSurface& surface);

}  // namespace imargin
