#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "imargin/dates.hpp"
#include "imargin/heston.hpp"
#include "imargin/marketdata.hpp"
#include "imargin/portfolio.hpp"
#include "imargin/shortterm.hpp"

namespace imargin::backtest {

// --- portfolios -------------------------------------------------------------

enum class SpecKind { outright, calendar, butterfly };
const char* to_string(SpecKind kind);

// How a leg's strike is fixed each day.
//   delta: the call delta `level` at the ATM implied vol of maturity
//     strike_tau_days; atm: k = 0; moneyness: K = level * F(tau).
enum class Anchor { delta, atm, moneyness };

struct Leg {
    Anchor anchor = Anchor::delta;
    double level = 0.0;
    double tau_days = 0.0;         // calendar days to expiry
    double strike_tau_days = 0.0;  // maturity the strike is read at
    double quantity = 0.0;
};

struct PortfolioSpec {
    std::string id;
    SpecKind kind = SpecKind::outright;
    std::vector<Leg> legs;
};

// 20 outrights (deltas 0.2, 0.35, ATM, 0.65, 0.8 at 30/90/180/365 days),
// 30 calendars (short T1, long T2 > T1, both at the T1 strike) and
// 24 butterflies (long delta and 1 - delta, short two ATM; deltas 0.1, 0.2,
// 0.3, 0.35, 0.4, 0.45).
std::vector<PortfolioSpec> make_portfolios();

// ATM calendar 1M-6M and 3M butterfly at moneyness 0.9 / 1 / 1.1.
std::vector<PortfolioSpec> procyclicality_portfolios();

// Strikes for today's spot with zero rates (F = S); atm_vol(tau) is the
// ATM implied vol used to map deltas to strikes.
Portfolio resolve(const PortfolioSpec& spec, double spot, const std::function<double(double)>& atm_vol);

// --- market data ------------------------------------------------------------

// Daily spots and implied-vol lattices, one observation per calendar day.
class MarketSource {
public:
    virtual ~MarketSource() = default;
    static constexpr double day_length = 1.0 / 365.0;

    virtual std::size_t days() const = 0;
    virtual double spot(std::size_t t) const = 0;
    virtual Date date(std::size_t t) const = 0;
    virtual bool available(std::size_t t) const = 0;
    virtual const market::Lattice& lattice() const = 0;
    virtual const market::SurfaceGrid& grid(std::size_t t) const = 0;
    // Lets lazy sources compute the grids of days [from, to) in parallel.
    virtual void prepare_grids(std::size_t, std::size_t) const {}
};

// A simulated Heston history with zero rates and its implied-vol lattices,
// computed on demand.
class HestonMarket : public MarketSource {
public:
    HestonMarket(heston::HestonParams params, heston::HestonPath path,
                 market::Lattice lattice = market::Lattice::standard(), Date start = Date{});

    std::size_t days() const override { return spot_.size(); }
    double spot(std::size_t t) const override { return spot_[t]; }
    double variance(std::size_t t) const { return variance_[t]; }
    Date date(std::size_t t) const override;
    bool available(std::size_t t) const override;
    const heston::HestonParams& params() const { return params_; }
    const market::Lattice& lattice() const override { return lattice_; }

    // Heston implied vol at k = 0 for the state of day t.
    double atm_vol(std::size_t t, double tau) const;
    // Lattice of Heston implied vols for day t (computed once, thread-safe).
    const market::SurfaceGrid& grid(std::size_t t) const override;
    void prepare_grids(std::size_t from, std::size_t to) const override;

private:
    heston::HestonParams params_;
    std::vector<double> spot_;
    std::vector<double> variance_;
    market::Lattice lattice_;
    Date start_;
    struct Cache;
    std::shared_ptr<Cache> cache_;
};

// Surfaces read from files: consecutive calendar days on one lattice. A day
// without a grid is missing.
class GridHistory : public MarketSource {
public:
    GridHistory(market::Lattice lattice, Date start, std::vector<double> spots,
                std::vector<std::optional<market::SurfaceGrid>> grids);

    std::size_t days() const override { return spots_.size(); }
    double spot(std::size_t t) const override { return spots_[t]; }
    Date date(std::size_t t) const override;
    bool available(std::size_t t) const override;
    const market::Lattice& lattice() const override { return lattice_; }
    const market::SurfaceGrid& grid(std::size_t t) const override;

private:
    market::Lattice lattice_;
    Date start_;
    std::vector<double> spots_;
    std::vector<std::optional<market::SurfaceGrid>> grids_;
};

// `date,spot,tau_days,k,sigma`, one row per lattice node and day, tau in
// trading days as in the grid files. Term structures are flat at zero rates.
void write_surfaces_csv(std::ostream& out, const MarketSource& source, std::size_t from, std::size_t to);
GridHistory read_surfaces_csv(std::istream& in);

// --- short-term inputs --------------------------------------------------------

// vol-of-vol per node: factor times the 1M ATM EWMA vol-of-vol, or each
// node's own EWMA vol-of-vol.
enum class ZetaSource { factor, node_ewma };

struct ShortTermSettings {
    double lambda = 0.97;
    double volofvol_multiplier = 1.1;
    double volofvol_level = 0.9;
    double atm_tau = 1.0 / 12.0;  // the 1M ATM point
    ZetaSource zeta = ZetaSource::factor;
};

// EWMA estimates from days 0..last, one per day t >= 1 (after the return
// ending on day t). Node factors use the ratios of days 1..factor_days.
struct ShortTermInputs {
    std::vector<double> beta;          // index t - 1
    std::vector<double> rho;
    std::vector<double> atm_volofvol;
    std::vector<std::vector<double>> factors;           // per lattice column
    std::vector<std::vector<double>> node_volofvol;     // index t - 1, flat nodes
    std::vector<std::vector<double>> node_vols;         // per day, flat nodes
    ShortTermSettings settings;
    std::vector<std::string> warnings;

    // Parameters for a VaR on day t (1 <= t <= last).
    shortterm::ShortTermParams params(const market::Lattice& lattice, std::size_t t, double theta,
                                      double nu, double h) const;
};

ShortTermInputs shortterm_inputs(const MarketSource& source, std::size_t last, std::size_t factor_days,
                                 const ShortTermSettings& settings = {});

// --- backtest ---------------------------------------------------------------

enum class Method { sv, shortterm, shortterm_t, fhs };
const char* to_string(Method m);
Method method_from_string(const std::string& name);

struct BacktestConfig {
    Method method = Method::sv;
    double theta = 0.99;
    std::vector<int> mpor_days{1};
    std::size_t first_day = 0;  // first test day
    std::size_t test_days = 365;
    // sv: central-difference bumps relative to the spot and the variance.
    double eps_spot = 1e-3;
    double eps_variance = 1e-2;
    // shortterm / fhs; factors are calibrated on the days before first_day
    ShortTermSettings shortterm;
    double nu = 5.0;
    std::size_t z_draws = 200000;
    std::uint64_t seed = 20240521;
    std::size_t fhs_window = 0;  // 0: every return before the test day
};

struct DayRow {
    std::size_t day = 0;
    Date date{};
    double var = 0.0;
    double pnl = 0.0;
    double value = 0.0;       // portfolio value at the start of the period
    bool breach = false;      // pnl < var
    double breach_size = 0.0; // (var - pnl) / |value| when breached
    std::string error;        // method failure; the day is not counted
};

struct Aggregates {
    std::size_t tested = 0;
    std::size_t breaches = 0;
    double coverage = 0.0;
    std::size_t sized_breaches = 0;  // breaches on a nonzero portfolio value
    double size_of_loss_mean = 0.0;  // NaN without sized breaches
    double size_of_loss_median = 0.0;
    double peak_to_trough = 0.0;     // NaN when undefined
    std::vector<double> n_day_pct;   // for n = 1, 5, 10, 20; NaN when undefined
};

inline const std::vector<int>& procyclicality_horizons() {
    static const std::vector<int> n{1, 5, 10, 20};
    return n;
}

DayRow make_row(std::size_t day, Date date, double var, double pnl, double value);
Aggregates aggregate(const std::vector<DayRow>& rows);

struct BacktestReport {
    std::string spec_id;
    Method method = Method::sv;
    int mpor_days = 1;
    double theta = 0.99;
    std::vector<DayRow> rows;
    Aggregates agg;
    std::vector<std::string> warnings;
};

// One report per spec and MPOR: result[m][s] for config.mpor_days[m] and
// specs[s]. Portfolios are re-anchored every test day; the realized P&L
// revalues the same contracts h later, by Heston prices for sv and by
// Black-Scholes on the day's lattice for the other methods.
// sv needs a HestonMarket.
std::vector<std::vector<BacktestReport>> run_backtest(const MarketSource& market,
                                                      const std::vector<PortfolioSpec>& specs,
                                                      const BacktestConfig& config);

struct TableRow {
    Method method = Method::sv;
    int mpor_days = 1;
    std::size_t portfolios = 0;
    double coverage_mean = 0.0;
    double coverage_median = 0.0;
    std::size_t with_breaches = 0;
    double size_of_loss_mean = 0.0;    // over portfolios with sized breaches
    double size_of_loss_median = 0.0;
};

TableRow summarize(const std::vector<BacktestReport>& reports);

// --- metrics ----------------------------------------------------------------

struct Procyclicality {
    double peak_to_trough = 0.0;
    std::vector<double> n_day_pct;
};

// max(-VaR) / min(-VaR) and max_t(VaR_t / VaR_{t-n} - 1) * 100 per n.
// Throws InsufficientData unless the series is longer than every n and
// DomainError when min(-VaR) is zero.
Procyclicality procyclicality_metrics(const std::vector<double>& var_series, const std::vector<int>& n_list);

struct CoverageBand {
    std::size_t min_breaches = 0;
    std::size_t max_breaches = 0;
    double coverage_low = 0.0;
    double coverage_high = 0.0;
};

// Exact binomial acceptance region for the breach count of n days at VaR
// level theta: at most (1 - confidence) / 2 probability in each tail.
CoverageBand kupiec_band(std::size_t n, double theta, double confidence = 0.99);

// --- margin stack -------------------------------------------------------------

struct MarginLine {
    double quantity = 0.0;  // > 0 long, < 0 short
    double price = 0.0;     // option price O(t)
    bool equity_style = true;     // premium paid at settlement
    bool premium_settled = true;
};

// sum of L_i O_i - sum of S_j O_j over equity-style lines.
double net_option_value(const std::vector<MarginLine>& lines);
// The same sum over lines whose premium is not settled yet.
double unpaid_premium(const std::vector<MarginLine>& lines);

// max(max(im + addons, som) - nov + up, 0)
double total_risk_requirement(double im, double addons, double som, double nov, double up);

// --- files --------------------------------------------------------------------

// `spec_id,date,var,pnl,breach,breach_size`
void write_report_csv(std::ostream& out, const std::vector<BacktestReport>& reports);
// One aggregate row per report.
void write_summary_csv(std::ostream& out, const std::vector<BacktestReport>& reports);
// Averages over portfolios, one row per (method, MPOR).
void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows);

}  // namespace imargin::backtest
