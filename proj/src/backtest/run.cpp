#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include "imargin/backtest.hpp"
#include "imargin/errors.hpp"
#include "imargin/estimators.hpp"
#include "imargin/fhs.hpp"
#include "imargin/parallel.hpp"
#include "imargin/shortterm.hpp"
#include "imargin/valuation.hpp"

namespace imargin::backtest {

namespace {

constexpr double kDay = MarketSource::day_length;

// (omega, strike, tau, spot, variance)
using PriceKey = std::array<double, 5>;

// Heston prices of every option line needed on one day, computed once.
class DayPrices {
public:
    explicit DayPrices(const heston::HestonParams& p) : params_(p) {}

    void request(const Position& pos, double s, double v) {
        if (is_option(pos.kind)) table_.emplace(key(pos, s, v), 0.0);
    }
    void compute() {
        std::vector<std::map<PriceKey, double>::iterator> slots;
        for (auto it = table_.begin(); it != table_.end(); ++it) slots.push_back(it);
        parallel_for(slots.size(), [&](std::size_t i) {
            const auto& k = slots[i]->first;
            slots[i]->second =
                heston::heston_price(params_, k[3], k[4], static_cast<int>(k[0]), k[1], k[2]);
        });
    }
    double value(const Portfolio& pf, double s, double v) const {
        double total = 0.0;
        for (const auto& pos : pf) {
            if (pos.kind == Instrument::spot) {
                total += pos.quantity * s;
            } else if (pos.kind == Instrument::cash) {
                total += pos.quantity;
            } else {
                const auto it = table_.find(key(pos, s, v));
                const double price = it != table_.end()
                                         ? it->second
                                         : heston::heston_price(params_, s, v, omega(pos.kind), pos.strike, pos.tau);
                total += pos.quantity * price;
            }
        }
        return total;
    }

private:
    static PriceKey key(const Position& pos, double s, double v) {
        return {static_cast<double>(omega(pos.kind)), pos.strike, pos.tau, s, v};
    }
    const heston::HestonParams& params_;
    std::map<PriceKey, double> table_;
};

// The bumped states fd_portfolio_sensitivities will ask for.
std::vector<std::pair<double, double>> fd_states(double s, double v, double eps_s, double eps_v) {
    while (v - eps_v <= 0.0 && eps_v > 1e-300) eps_v *= 0.5;
    return {{s, v}, {s + eps_s, v}, {s - eps_s, v}, {s, v + eps_v}, {s, v - eps_v}};
}

fhs::RiskFactorPanel prefix_panel(const fhs::RiskFactorPanel& full, std::size_t returns) {
    fhs::RiskFactorPanel p;
    p.ewma = full.ewma;
    p.spot_log_returns.assign(full.spot_log_returns.begin(), full.spot_log_returns.begin() + returns);
    p.iv_abs_returns.assign(full.iv_abs_returns.begin(), full.iv_abs_returns.begin() + returns);
    return p;
}

}  // namespace

ShortTermInputs shortterm_inputs(const MarketSource& source, std::size_t last, std::size_t factor_days,
                                 const ShortTermSettings& settings) {
    if (last < 1 || last >= source.days()) throw InsufficientData("shortterm inputs: need at least two days");
    ShortTermInputs h;
    h.settings = settings;
    const auto& lat = source.lattice();
    const std::size_t nodes = lat.node_count();
    std::vector<double> atm(last + 1), returns(last), d_atm(last);
    h.node_vols.resize(last + 1);
    for (std::size_t t = 0; t <= last; ++t) {
        const auto& g = source.grid(t);
        h.node_vols[t] = g.flat_vols();
        atm[t] = g.iv(settings.atm_tau, 0.0);
    }
    for (std::size_t i = 0; i < last; ++i) {
        returns[i] = std::log(source.spot(i + 1) / source.spot(i));
        d_atm[i] = atm[i + 1] - atm[i];
    }
    est::EwmaConfig ew;
    ew.lambda = settings.lambda;
    ew.convention = est::Convention::current;
    ew.step = kDay;
    h.beta = est::ewma_vol(returns, ew);
    h.rho = est::ewma_corr(returns, d_atm, settings.lambda);
    h.atm_volofvol = est::ewma_vol(d_atm, ew);

    // Node vol-of-vol relative to the 1M ATM one over days 1..factor_days.
    const std::size_t window = std::min(factor_days, last);
    h.node_volofvol.assign(last, std::vector<double>(nodes));
    h.factors.assign(lat.taus.size(), {});
    std::vector<double> node_ret(last);
    for (std::size_t j = 0; j < lat.taus.size(); ++j) {
        for (std::size_t m = 0; m < lat.ks[j].size(); ++m) {
            const std::size_t n = lat.flat(j, m);
            for (std::size_t i = 0; i < last; ++i) node_ret[i] = h.node_vols[i + 1][n] - h.node_vols[i][n];
            const auto vov = est::ewma_vol(node_ret, ew);
            for (std::size_t i = 0; i < last; ++i) h.node_volofvol[i][n] = vov[i];
            std::vector<double> ratios;
            for (std::size_t i = 0; i < window; ++i)
                if (h.atm_volofvol[i] > 0.0) ratios.push_back(vov[i] / h.atm_volofvol[i]);
            double f = 1.0;
            if (ratios.empty()) {
                h.warnings.push_back("vol-of-vol factor of node " + std::to_string(n) + " has no history; set to 1");
            } else {
                auto est = est::volofvol_factor(ratios, settings.volofvol_multiplier, settings.volofvol_level);
                f = est.factor;
                for (auto& w : est.warnings) h.warnings.push_back(std::move(w));
            }
            h.factors[j].push_back(f);
        }
    }
    return h;
}

shortterm::ShortTermParams ShortTermInputs::params(const market::Lattice& lattice, std::size_t t, double theta,
                                                   double nu, double h) const {
    if (t < 1 || t > beta.size()) throw DomainError("shortterm inputs: day outside the estimated history");
    shortterm::ShortTermParams p;
    p.beta = beta[t - 1];
    p.rho = rho[t - 1];
    p.nu = nu;
    p.theta = theta;
    p.h = h;
    std::shared_ptr<const shortterm::VolOfVolLattice> zeta;
    if (settings.zeta == ZetaSource::factor) {
        zeta = std::make_shared<shortterm::VolOfVolLattice>(lattice, factors, atm_volofvol[t - 1]);
    } else {
        std::vector<std::vector<double>> own(lattice.taus.size());
        for (std::size_t j = 0; j < lattice.taus.size(); ++j)
            for (std::size_t m = 0; m < lattice.ks[j].size(); ++m)
                own[j].push_back(node_volofvol[t - 1][lattice.flat(j, m)]);
        zeta = std::make_shared<shortterm::VolOfVolLattice>(lattice, std::move(own), 1.0);
    }
    p.zeta_of = [zeta](double k, double tau) { return (*zeta)(k, tau); };
    return p;
}

std::vector<std::vector<BacktestReport>> run_backtest(const MarketSource& market,
                                                      const std::vector<PortfolioSpec>& specs,
                                                      const BacktestConfig& cfg) {
    if (!(cfg.theta > 0.0 && cfg.theta < 1.0)) throw ConfigError("backtest: theta must lie in (0,1)");
    if (cfg.mpor_days.empty()) throw ConfigError("backtest: no MPOR given");
    int max_m = 0;
    for (int m : cfg.mpor_days) {
        if (m <= 0) throw ConfigError("backtest: MPOR days must be positive");
        max_m = std::max(max_m, m);
    }
    if (cfg.test_days == 0) throw ConfigError("backtest: no test days");
    const std::size_t last = cfg.first_day + cfg.test_days - 1 + static_cast<std::size_t>(max_m);
    if (last >= market.days())
        throw InsufficientData("backtest: history has " + std::to_string(market.days()) +
                               " days, the test window needs " + std::to_string(last + 1));
    const bool surface = cfg.method != Method::sv;
    if (surface && cfg.first_day < 2)
        throw InsufficientData("backtest: surface methods need history before the first test day");

    const std::size_t n_m = cfg.mpor_days.size();
    std::vector<std::vector<BacktestReport>> out(n_m, std::vector<BacktestReport>(specs.size()));
    for (std::size_t m = 0; m < n_m; ++m)
        for (std::size_t s = 0; s < specs.size(); ++s) {
            auto& r = out[m][s];
            r.spec_id = specs[s].id;
            r.method = cfg.method;
            r.mpor_days = cfg.mpor_days[m];
            r.theta = cfg.theta;
        }
    std::vector<std::string> warnings;

    std::set<double> strike_taus;
    for (const auto& spec : specs)
        for (const auto& leg : spec.legs)
            if (leg.anchor == Anchor::delta) strike_taus.insert(leg.strike_tau_days / 365.0);

    const auto* heston_market = dynamic_cast<const HestonMarket*>(&market);
    if (!surface && !heston_market) throw ConfigError("backtest: the sv method needs a Heston market");

    std::optional<ShortTermInputs> hist;
    std::optional<shortterm::ZQuantileTable> ztable;
    fhs::RiskFactorPanel panel;
    if (surface) {
        for (std::size_t t = 0; t <= last; ++t)
            if (!market.available(t))
                throw InsufficientData("backtest: surface methods need every day up to " + std::to_string(last) +
                                       "; day " + std::to_string(t) + " is missing");
        market.prepare_grids(0, last + 1);
        hist = shortterm_inputs(market, last, cfg.first_day, cfg.shortterm);
        warnings.insert(warnings.end(), hist->warnings.begin(), hist->warnings.end());
        if (cfg.method == Method::shortterm_t) ztable.emplace(cfg.nu, 1.0 - cfg.theta, cfg.z_draws, cfg.seed);
        if (cfg.method == Method::fhs) {
            est::EwmaConfig ew;
            ew.lambda = cfg.shortterm.lambda;
            ew.step = kDay;
            std::vector<double> spots(last + 1);
            for (std::size_t t = 0; t <= last; ++t) spots[t] = market.spot(t);
            panel = fhs::panel_from_history(spots, hist->node_vols, ew);
        }
    }

    for (std::size_t i = 0; i < cfg.test_days; ++i) {
        const std::size_t t = cfg.first_day + i;
        bool missing = !market.available(t);
        for (int m : cfg.mpor_days) missing = missing || !market.available(t + m);
        if (missing) {
            warnings.push_back("day " + std::to_string(t) + " (" + format_date(market.date(t)) +
                               ") skipped: missing market state");
            continue;
        }
        const double s = market.spot(t), v = surface ? 0.0 : heston_market->variance(t);

        std::map<double, double> atm;
        std::string day_error;
        try {
            for (double tau : strike_taus) atm[tau] = surface ? market.grid(t).iv(tau, 0.0) : heston_market->atm_vol(t, tau);
        } catch (const Error& e) {
            day_error = e.what();
        }
        std::vector<Portfolio> pfs(specs.size());
        std::vector<std::string> errors(specs.size(), day_error);
        for (std::size_t k = 0; k < specs.size() && day_error.empty(); ++k) {
            try {
                pfs[k] = resolve(specs[k], s, [&](double tau) { return atm.at(tau); });
            } catch (const Error& e) {
                errors[k] = e.what();
            }
        }

        // vars[k][m], pnls[k][m], values[k]
        std::vector<std::vector<double>> vars(specs.size(), std::vector<double>(n_m, 0.0));
        std::vector<std::vector<double>> pnls = vars;
        std::vector<double> values(specs.size(), 0.0);

        if (!surface) {
            const auto& hm = *heston_market;
            DayPrices prices(hm.params());
            const double eps_s = cfg.eps_spot * s, eps_v = cfg.eps_variance * v;
            const auto states = v > 0.0 ? fd_states(s, v, eps_s, eps_v) : std::vector<std::pair<double, double>>{};
            for (std::size_t k = 0; k < specs.size(); ++k) {
                if (!errors[k].empty()) continue;
                for (const auto& [ss, vv] : states)
                    for (const auto& pos : pfs[k]) prices.request(pos, ss, vv);
                for (std::size_t m = 0; m < n_m; ++m) {
                    const auto aged = age(pfs[k], cfg.mpor_days[m] * kDay);
                    for (const auto& pos : aged)
                        prices.request(pos, hm.spot(t + cfg.mpor_days[m]), hm.variance(t + cfg.mpor_days[m]));
                }
            }
            prices.compute();
            const heston::StatePricer pricer = [&](const Portfolio& pf, double ss, double vv) {
                return prices.value(pf, ss, vv);
            };
            parallel_for(specs.size(), [&](std::size_t k) {
                if (!errors[k].empty()) return;
                try {
                    values[k] = prices.value(pfs[k], s, v);
                    const auto sens = heston::fd_portfolio_sensitivities(pricer, pfs[k], s, v, eps_s, eps_v);
                    for (std::size_t m = 0; m < n_m; ++m) {
                        const int d = cfg.mpor_days[m];
                        vars[k][m] = heston::sv_var(sens, s, v, hm.params(), cfg.theta, d * kDay);
                        pnls[k][m] = prices.value(age(pfs[k], d * kDay), hm.spot(t + d), hm.variance(t + d)) -
                                     values[k];
                    }
                } catch (const Error& e) {
                    errors[k] = e.what();
                }
            });
        } else {
            const auto& grid = market.grid(t);
            const auto sp = hist->params(market.lattice(), t, cfg.theta, cfg.nu, kDay);
            std::optional<fhs::RiskFactorPanel> sub;
            if (cfg.method == Method::fhs) sub = prefix_panel(panel, t);

            parallel_for(specs.size(), [&](std::size_t k) {
                if (!errors[k].empty()) return;
                try {
                    values[k] = portfolio_value(pfs[k], grid);
                    std::optional<shortterm::ExposureCoeffs> coeffs;
                    if (cfg.method != Method::fhs) coeffs = shortterm::exposure_coeffs(pfs[k], s, grid, sp);
                    for (std::size_t m = 0; m < n_m; ++m) {
                        const int d = cfg.mpor_days[m];
                        const double h = d * kDay;
                        if (cfg.method == Method::shortterm) {
                            auto p = sp;
                            p.h = h;
                            vars[k][m] = shortterm::gaussian_var(*coeffs, p);
                        } else if (cfg.method == Method::shortterm_t) {
                            vars[k][m] = ztable->var(*coeffs, sp.rho, h);
                        } else {
                            fhs::FhsOptions opt;
                            opt.n_back = cfg.fhs_window == 0 ? 0 : std::min(cfg.fhs_window, t);
                            vars[k][m] = fhs::fhs_var(pfs[k], grid, *sub, cfg.theta, h, opt).var;
                        }
                        pnls[k][m] = portfolio_value(age(pfs[k], h), market.grid(t + d)) - values[k];
                    }
                } catch (const Error& e) {
                    errors[k] = e.what();
                }
            });
        }

        for (std::size_t m = 0; m < n_m; ++m)
            for (std::size_t k = 0; k < specs.size(); ++k) {
                DayRow row = make_row(t, market.date(t), vars[k][m], pnls[k][m], values[k]);
                if (!errors[k].empty()) {
                    row.var = row.pnl = std::numeric_limits<double>::quiet_NaN();
                    row.breach = false;
                    row.error = errors[k];
                }
                out[m][k].rows.push_back(std::move(row));
            }
    }

    for (auto& per_m : out)
        for (auto& r : per_m) {
            r.agg = aggregate(r.rows);
            r.warnings = warnings;
            for (const auto& row : r.rows)
                if (!row.error.empty())
                    r.warnings.push_back("day " + std::to_string(row.day) + " excluded: " + row.error);
        }
    return out;
}

}  // namespace imargin::backtest
