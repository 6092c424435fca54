#pragma once

namespace imargin::bs {

// A European option in normalized coordinates: k = log(K / F).
struct QuoteContext {
    double k = 0.0;
    double tau = 0.0;  // years
    int omega = 1;     // +1 call, -1 put
    double forward = 1.0;
    double discount = 1.0;
    double sigma = 0.0;  // per sqrt(year)
};

double price(const QuoteContext& ctx);

// Undiscounted call price divided by the forward, as a function of k and the
// total standard deviation s = sigma * sqrt(tau).
double normalized_call(double k, double total_sd);
// d(normalized_call)/d(total_sd) = phi(d1).
double normalized_vega(double k, double total_sd);
// (1 - e^k)^+
double normalized_intrinsic(double k);

// Volatility reproducing `price`; ctx.sigma is ignored. Throws
// BoundViolation when the price is at or outside the no-arbitrage bounds.
double implied_vol(double price, const QuoteContext& ctx);
double implied_vol_normalized(double call, double k, double tau);

struct Greeks {
    double delta;  // omega * Phi(omega d1)
    double vega;   // DF * F * phi(d1) * sqrt(tau)
};

Greeks greeks(const QuoteContext& ctx);

double d1(double k, double total_sd);

// Log-forward moneyness of the call whose delta Phi(d1) equals `delta`
// at volatility sigma.
double k_from_delta(double delta, double tau, double sigma);

}  // namespace imargin::bs
