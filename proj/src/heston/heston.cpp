#include "imargin/heston.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/normal.hpp"
#include "imargin/quadrature.hpp"
#include "imargin/random.hpp"

namespace imargin::heston {

using cplx = std::complex<double>;

HestonParams HestonParams::reference() { return HestonParams{}; }

void HestonParams::validate() const {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    if (!positive(kappa) || !positive(theta) || !positive(s0) || !positive(v0) || !positive(dt))
        throw DomainError("heston: kappa, theta, s0, v0 and dt must be positive");
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw DomainError("heston: xi must be non-negative");
    if (!(rho >= -1.0 && rho <= 1.0)) throw DomainError("heston: rho outside [-1, 1]");
    if (!std::isfinite(alpha)) throw DomainError("heston: alpha is not finite");
}

HestonPath simulate_paths(const HestonParams& params, std::size_t n_days, std::uint64_t seed,
                          std::uint64_t stream, Scheme scheme, double day) {
    params.validate();
    if (!(day > 0.0)) throw DomainError("heston: day length must be positive");
    if (params.dt > day * (1.0 + 1e-12)) throw DomainError("heston: dt must not exceed one day");
    const auto per_day = static_cast<std::size_t>(std::llround(day / params.dt));
    const double dt = day / static_cast<double>(per_day);
    const double sqrt_dt = std::sqrt(dt);
    const double rho_c = std::sqrt(1.0 - params.rho * params.rho);

    HestonPath path;
    path.spot.reserve(n_days + 1);
    path.variance.reserve(n_days + 1);
    double s = params.s0, v = params.v0;
    path.spot.push_back(s);
    path.variance.push_back(v);
    Rng rng(seed, stream);
    for (std::size_t d = 0; d < n_days; ++d) {
        for (std::size_t i = 0; i < per_day; ++i) {
            const double z0 = rng.normal(), z1 = rng.normal();
            const double x = params.rho * z0 + rho_c * z1;
            const double vp = std::max(v, 0.0);
            const double sd = std::sqrt(vp) * sqrt_dt;
            if (scheme == Scheme::arithmetic)
                s *= 1.0 + params.alpha * dt + sd * z0;
            else
                s *= std::exp((params.alpha - 0.5 * vp) * dt + sd * z0);
            v += params.kappa * (params.theta - vp) * dt + params.xi * sd * x;
            path.truncated_steps += v < 0.0;
            ++path.steps;
        }
        path.spot.push_back(s);
        path.variance.push_back(std::max(v, 0.0));
    }
    return path;
}

void write_history_csv(std::ostream& out, const HestonPath& path, Date start) {
    out << "date,spot,variance\n";
    for (std::size_t i = 0; i < path.spot.size(); ++i)
        out << format_date(start + std::chrono::days(static_cast<int>(i))) << ','
            << csv::format_double(path.spot[i]) << ',' << csv::format_double(path.variance[i])
            << '\n';
}

HestonPath read_history_csv(std::istream& in) {
    const auto table = csv::read(in);
    const auto cs = table.column("spot"), cv = table.column("variance");
    HestonPath path;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        path.spot.push_back(csv::to_double(table.rows[r][cs], r + 1, "spot"));
        path.variance.push_back(csv::to_double(table.rows[r][cv], r + 1, "variance"));
    }
    if (path.spot.empty()) throw InsufficientData("heston history file has no rows");
    return path;
}

cplx log_spot_cf(const HestonParams& p, double v, double tau, cplx u) {
    const cplx i(0.0, 1.0);
    const cplx iu = i * u;
    const cplx a = p.kappa - p.rho * p.xi * iu;
    const cplx w = iu + u * u;  // (A - d)(A + d) = -xi^2 w
    const cplx d = std::sqrt(a * a + p.xi * p.xi * w);
    const cplx apd = a + d;
    const cplx amd_over_xi2 = -w / apd;      // (A - d) / xi^2, finite as xi -> 0
    const cplx g_over_xi2 = amd_over_xi2 / apd;  // g / xi^2 with g = (A - d)/(A + d)
    const cplx g = g_over_xi2 * (p.xi * p.xi);
    const cplx e = std::exp(-d * tau);
    const cplx z = g * (1.0 - e) / (1.0 - g);
    const cplx z_over_xi2 = g_over_xi2 * (1.0 - e) / (1.0 - g);
    // log(1 + z) / xi^2 without dividing a vanishing logarithm by xi^2
    cplx log_term;
    if (std::abs(z) < 1e-3)
        log_term = z_over_xi2 * (1.0 - z / 2.0 + z * z / 3.0 - z * z * z / 4.0);
    else
        log_term = std::log(1.0 + z) / (p.xi * p.xi);
    const cplx big_c = p.kappa * p.theta * (amd_over_xi2 * tau - 2.0 * log_term);
    const cplx big_d = amd_over_xi2 * (1.0 - e) / (1.0 - g * e);
    return std::exp(big_c + big_d * v);
}

namespace {

// Damped single-integral price of an out-of-the-money call (Carr-Madan with
// damping alpha > 0), c = e^{-alpha k} / pi * int_0^inf Re[e^{-iuk} phi(u - i(alpha+1))
// / ((alpha + iu)(alpha + 1 + iu))] du in units of the spot, k = log(K/S). Deep
// in the wings the undamped formula loses everything to cancellation; a
// damping near the saddle point keeps the integrand at the scale of the price.
double damped_otm_call(const HestonParams& p, double variance, double tau, double k,
                       const PriceOptions& options) {
    // Moments E[S^q] stay finite while kappa - rho xi q > 0 and the square
    // root in the characteristic exponent stays real.
    const double qa = p.xi * p.xi * (p.rho * p.rho - 1.0);
    const double qb = p.xi * p.xi - 2.0 * p.kappa * p.rho * p.xi;
    const double qc = p.kappa * p.kappa;
    double q_max = 200.0;
    if (qa < 0.0) q_max = std::min(q_max, (-qb - std::sqrt(qb * qb - 4.0 * qa * qc)) / (2.0 * qa));
    if (p.rho > 0.0 && p.xi > 0.0) q_max = std::min(q_max, p.kappa / (p.rho * p.xi));
    const double alpha_max = 0.95 * (q_max - 1.0);
    if (!(alpha_max > 0.0)) return 0.0;

    auto log_level = [&](double alpha) {
        const cplx m = log_spot_cf(p, variance, tau, cplx(0.0, -(alpha + 1.0)));
        return -alpha * k + std::log(m.real()) - std::log(alpha * (alpha + 1.0));
    };
    double best = alpha_max, best_val = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= 200; ++i) {
        const double a = alpha_max * i / 200.0;
        const double v = log_level(a);
        if (std::isfinite(v) && v < best_val) {
            best_val = v;
            best = a;
        }
    }
    const double alpha = best;
    const double level = std::exp(best_val);
    const double scale = 1.0 / std::sqrt(std::max({variance, p.theta, 1e-4}) * tau);
    auto integrand = [&](double t) {
        if (t >= 1.0) return 0.0;
        const double u = scale * t / (1.0 - t);
        const cplx phi = log_spot_cf(p, variance, tau, cplx(u, -(alpha + 1.0)));
        const cplx den = cplx(alpha, u) * cplx(alpha + 1.0, u);
        const cplx val = std::exp(cplx(-alpha * k, -u * k)) * phi / den;
        const double out = val.real() * scale / ((1.0 - t) * (1.0 - t));
        return std::isfinite(out) ? out : 0.0;
    };
    const auto res = integrate_adaptive(integrand, 0.0, 1.0, 1e-6 * level, 1e-9, options.max_depth);
    if (!res.converged) return std::numeric_limits<double>::quiet_NaN();
    return std::max(res.value / std::numbers::pi, 0.0);
}

}  // namespace

double heston_call_price(const HestonParams& params, double strike, double tau,
                         const PriceOptions& options) {
    return heston_call_price(params, params.s0, params.v0, strike, tau, options);
}

double heston_call_price(const HestonParams& params, double spot, double variance, double strike,
                         double tau, const PriceOptions& options) {
    params.validate();
    if (!(spot > 0.0) || !(strike > 0.0)) throw DomainError("heston price: spot and strike must be positive");
    if (!(variance >= 0.0)) throw DomainError("heston price: negative variance");
    if (!(tau >= 0.0)) throw DomainError("heston price: negative maturity");
    if (tau == 0.0) return std::max(spot - strike, 0.0);

    const double x = std::log(spot / strike);
    // u = scale * t / (1 - t) maps [0, 1) onto [0, inf); the scale follows
    // the width of the integrand, about 1 / (total standard deviation).
    const double var_level = std::max({variance, params.theta, 1e-4});
    const double scale = 1.0 / std::sqrt(var_level * tau);
    auto integrand = [&](double t) {
        if (t >= 1.0) return 0.0;
        const double u = scale * t / (1.0 - t);
        const cplx phi = log_spot_cf(params, variance, tau, cplx(u, -0.5));
        const cplx val = std::exp(cplx(0.0, u * x)) * phi;
        const double jac = scale / ((1.0 - t) * (1.0 - t));
        const double out = val.real() / (u * u + 0.25) * jac;
        return std::isfinite(out) ? out : 0.0;
    };
    const auto res = integrate_adaptive(integrand, 0.0, 1.0, options.abs_tol, 0.0, options.max_depth);
    if (!res.converged) {
        std::ostringstream msg;
        msg << "heston price did not converge: strike " << strike << ", tau " << tau
            << ", error estimate " << res.error << " after " << res.panels << " panels";
        throw NumericalError(msg.str());
    }
    const double price = spot - std::sqrt(spot * strike) / std::numbers::pi * res.value;
    if (x < 0.0 && price < 1e-7 * spot) {
        const double damped = damped_otm_call(params, variance, tau, -x, options);
        if (std::isfinite(damped)) return spot * damped;
    }
    return std::clamp(price, std::max(spot - strike, 0.0), spot);
}

double heston_price(const HestonParams& params, double spot, double variance, int omega,
                    double strike, double tau, const PriceOptions& options) {
    const double call = heston_call_price(params, spot, variance, strike, tau, options);
    if (omega == 1) return call;
    if (omega != -1) throw DomainError("omega must be +1 or -1");
    return std::max(call - spot + strike, 0.0);
}

double portfolio_value(const HestonParams& params, const Portfolio& portfolio, double spot,
                       double variance) {
    double total = 0.0;
    for (const auto& p : portfolio) {
        if (p.quantity == 0.0) continue;
        switch (p.kind) {
        case Instrument::cash:
            total += p.quantity;
            break;
        case Instrument::spot:
            total += p.quantity * spot;
            break;
        default:
            total += p.quantity * heston_price(params, spot, variance, omega(p.kind), p.strike,
                                               std::max(p.tau, 0.0));
        }
    }
    return total;
}

Sensitivities fd_portfolio_sensitivities(const StatePricer& pricer, const Portfolio& portfolio,
                                         double spot, double variance, double eps_s, double eps_v) {
    if (!(eps_s > 0.0) || !(eps_v > 0.0)) throw DomainError("bump sizes must be positive");
    if (!(variance > 0.0)) throw DomainError("variance must be positive for a variance bump");
    Sensitivities out;
    if (!(spot - eps_s > 0.0)) throw DomainError("spot bump larger than the spot");
    if (!(variance - eps_v > 0.0)) {
        while (!(variance - eps_v > 0.0)) eps_v *= 0.5;
        std::ostringstream msg;
        msg << "variance bump reduced to " << eps_v << " to keep v - eps positive";
        out.warnings.push_back(msg.str());
    }
    out.d_spot = (pricer(portfolio, spot + eps_s, variance) - pricer(portfolio, spot - eps_s, variance)) /
                 (2.0 * eps_s);
    out.d_variance =
        (pricer(portfolio, spot, variance + eps_v) - pricer(portfolio, spot, variance - eps_v)) /
        (2.0 * eps_v);
    return out;
}

double sv_var(const Sensitivities& sens, double spot, double variance, const HestonParams& params,
              double theta, double h) {
    if (!(variance > 0.0)) throw DomainError("sv_var needs a positive variance");
    if (!(theta > 0.5 && theta < 1.0)) throw DomainError("confidence level must be in (0.5, 1)");
    const double ds = sens.d_spot, dv = sens.d_variance;
    const double rad = spot * spot * variance * ds * ds + params.xi * params.xi * variance * dv * dv +
                       2.0 * params.rho * params.xi * spot * variance * ds * dv;
    // (s ds)^2 + (xi dv)^2 + 2 rho (s ds)(xi dv) >= 0 for |rho| <= 1, up to rounding
    return norm_inv(1.0 - theta) * std::sqrt(std::max(rad, 0.0)) * std::sqrt(h);
}

}  // namespace imargin::heston
