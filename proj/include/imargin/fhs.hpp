#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "imargin/dates.hpp"
#include "imargin/estimators.hpp"
#include "imargin/marketdata.hpp"
#include "imargin/portfolio.hpp"

namespace imargin::fhs {

// Daily risk-factor returns: spot log-returns and absolute changes of the
// implied vol at each lattice node (columns in Lattice::flat order).
struct RiskFactorPanel {
    std::vector<Date> dates;  // optional; empty or one per return
    std::vector<double> spot_log_returns;
    std::vector<std::vector<double>> iv_abs_returns;  // days x nodes
    est::EwmaConfig ewma;  // ewma.step is the return horizon h_r in years

    std::size_t days() const { return spot_log_returns.size(); }
    std::size_t nodes() const { return iv_abs_returns.empty() ? 0 : iv_abs_returns.front().size(); }
    void validate() const;
};

// One-step-ahead scenarios, in raw return units of the panel step.
struct Scenarios {
    std::vector<double> spot;              // n_back
    std::vector<std::vector<double>> iv;   // n_back x nodes
    double spot_forecast_vol = 0.0;        // sigma_{t+1} of the spot, per step
    std::vector<double> iv_forecast_vol;   // per node, per step
};

// The last n_back days devolatilized by their EWMA vol (per the configured
// convention) and rescaled by the EWMA forecast for the next step. A day
// with zero vol and zero return gives a zero residual; zero vol with a
// nonzero return is an error.
Scenarios filtered_scenarios(const RiskFactorPanel& panel, std::size_t n_back);

struct FhsResult {
    double var = 0.0;
    std::vector<double> pnl;  // one per scenario, in scenario order
    std::size_t floored_values = 0;             // shocked node vols lifted to the floor
    std::vector<std::size_t> floored_per_node;  // Lattice::flat order
};

struct FhsOptions {
    std::size_t n_back = 0;  // 0: the whole panel
    double iv_floor = 1e-4;
    bool age_positions = true;  // reprice with tau - h
};

// Scenario P&L from full Black-Scholes revaluation: the spot is shocked
// multiplicatively, each node vol additively, both scaled by sqrt(h / h_r);
// rates are held constant. VaR is the type-7 (1 - theta)-quantile.
FhsResult fhs_var(const Portfolio& portfolio, const market::SurfaceGrid& grid,
                  const RiskFactorPanel& panel, double theta, double h, const FhsOptions& options = {});

// Panel CSV: `date,factor_id,return`, factor ids `spot` and `iv<flat index>`.
void write_panel_csv(std::ostream& out, const RiskFactorPanel& panel);
RiskFactorPanel read_panel_csv(std::istream& in, const est::EwmaConfig& ewma = {});

// `node,tau,k,floored` per lattice node.
void write_diagnostics_csv(std::ostream& out, const market::Lattice& lattice, const FhsResult& result);

// Panel built from a history of surfaces on one lattice (days x nodes vols)
// and the spot series; returns are day-over-day differences.
RiskFactorPanel panel_from_history(const std::vector<double>& spots,
                                   const std::vector<std::vector<double>>& node_vols,
                                   const est::EwmaConfig& ewma);

}  // namespace imargin::fhs
