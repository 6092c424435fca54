#include "imargin/fhs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/parallel.hpp"
#include "imargin/stats.hpp"
#include "imargin/valuation.hpp"

namespace imargin::fhs {

namespace {

struct Filtered {
    std::vector<double> residuals;  // eta_s for the last n_back days
    double forecast;
};

Filtered filter(std::span<const double> series, const est::EwmaConfig& cfg, std::size_t n_back,
                const std::string& name) {
    auto raw = cfg;
    raw.step = 1.0;  // stay in units of the panel return
    const auto vol = est::ewma_vol(series, raw);
    Filtered out{std::vector<double>(n_back), est::ewma_forecast(series, raw)};
    const std::size_t first = series.size() - n_back;
    for (std::size_t i = 0; i < n_back; ++i) {
        const double r = series[first + i], s = vol[first + i];
        if (s > 0.0) {
            out.residuals[i] = r / s;
        } else if (r == 0.0) {
            out.residuals[i] = 0.0;
        } else {
            std::ostringstream msg;
            msg << "FHS: zero EWMA volatility for factor " << name << " at day " << first + i
                << " with a nonzero return; set a floor";
            throw NumericalError(msg.str());
        }
    }
    return out;
}

}  // namespace

void RiskFactorPanel::validate() const {
    if (spot_log_returns.empty()) throw InsufficientData("FHS panel has no returns");
    if (!iv_abs_returns.empty() && iv_abs_returns.size() != spot_log_returns.size())
        throw DomainError("FHS panel: IV and spot histories have different lengths");
    for (const auto& row : iv_abs_returns)
        if (row.size() != nodes()) throw DomainError("FHS panel: ragged IV return rows");
    if (!dates.empty() && dates.size() != spot_log_returns.size())
        throw DomainError("FHS panel: one date per return expected");
}

Scenarios filtered_scenarios(const RiskFactorPanel& panel, std::size_t n_back) {
    panel.validate();
    if (n_back == 0 || n_back > panel.days()) {
        std::ostringstream msg;
        msg << "FHS lookback " << n_back << " must be in [1, " << panel.days() << "]";
        throw InsufficientData(msg.str());
    }
    Scenarios out;
    const auto spot = filter(panel.spot_log_returns, panel.ewma, n_back, "spot");
    out.spot_forecast_vol = spot.forecast;
    out.spot.resize(n_back);
    for (std::size_t i = 0; i < n_back; ++i) out.spot[i] = spot.residuals[i] * spot.forecast;

    const std::size_t nodes = panel.nodes();
    out.iv.assign(n_back, std::vector<double>(nodes));
    out.iv_forecast_vol.resize(nodes);
    std::vector<double> column(panel.days());
    for (std::size_t m = 0; m < nodes; ++m) {
        for (std::size_t d = 0; d < panel.days(); ++d) column[d] = panel.iv_abs_returns[d][m];
        const auto f = filter(column, panel.ewma, n_back, "iv" + std::to_string(m));
        out.iv_forecast_vol[m] = f.forecast;
        for (std::size_t i = 0; i < n_back; ++i) out.iv[i][m] = f.residuals[i] * f.forecast;
    }
    return out;
}

FhsResult fhs_var(const Portfolio& portfolio, const market::SurfaceGrid& grid,
                  const RiskFactorPanel& panel, double theta, double h, const FhsOptions& options) {
    if (!(theta > 0.5 && theta < 1.0)) throw DomainError("confidence level must be in (0.5, 1)");
    if (!(h >= 0.0)) throw DomainError("margin period must be non-negative");
    const std::size_t n_nodes = grid.lattice().node_count();
    if (panel.nodes() != 0 && panel.nodes() != n_nodes)
        throw DomainError("FHS panel node count does not match the surface lattice");
    const std::size_t n_back = options.n_back == 0 ? panel.days() : options.n_back;

    FhsResult out;
    out.floored_per_node.assign(n_nodes, 0);
    const bool has_risk = std::any_of(portfolio.begin(), portfolio.end(), [](const Position& p) {
        return p.quantity != 0.0 && p.kind != Instrument::cash;
    });
    if (!has_risk) {
        out.pnl.assign(n_back, 0.0);
        return out;
    }

    const auto sc = filtered_scenarios(panel, n_back);
    const double scale = std::sqrt(h / panel.ewma.step);
    const double base = portfolio_value(portfolio, grid);
    const Portfolio aged = options.age_positions ? age(portfolio, h) : portfolio;
    const auto& lat = grid.lattice();
    const auto& vols = grid.vols();

    std::vector<std::vector<unsigned char>> floored(n_back);
    out.pnl.assign(n_back, 0.0);
    parallel_for(n_back, [&](std::size_t i) {
        floored[i].assign(n_nodes, 0);
        auto shocked = vols;
        if (panel.nodes() != 0) {
            for (std::size_t j = 0; j < lat.taus.size(); ++j)
                for (std::size_t m = 0; m < lat.ks[j].size(); ++m) {
                    const std::size_t f = lat.flat(j, m);
                    double v = vols[j][m] + sc.iv[i][f] * scale;
                    if (v < options.iv_floor) {
                        v = options.iv_floor;
                        floored[i][f] = 1;
                    }
                    shocked[j][m] = v;
                }
        }
        const double spot = grid.spot() * std::exp(sc.spot[i] * scale);
        const auto moved = grid.with_vols(std::move(shocked)).with_term(grid.term().with_spot(spot));
        out.pnl[i] = portfolio_value(aged, moved) - base;
    });
    for (const auto& row : floored)
        for (std::size_t f = 0; f < n_nodes; ++f) {
            out.floored_per_node[f] += row[f];
            out.floored_values += row[f];
        }
    out.var = quantile(out.pnl, 1.0 - theta);
    return out;
}

void write_panel_csv(std::ostream& out, const RiskFactorPanel& panel) {
    panel.validate();
    out << "date,factor_id,return\n";
    for (std::size_t d = 0; d < panel.days(); ++d) {
        const std::string date = panel.dates.empty() ? std::to_string(d) : format_date(panel.dates[d]);
        out << date << ",spot," << csv::format_double(panel.spot_log_returns[d]) << '\n';
        for (std::size_t m = 0; m < panel.nodes(); ++m)
            out << date << ",iv" << m << ',' << csv::format_double(panel.iv_abs_returns[d][m]) << '\n';
    }
}

RiskFactorPanel read_panel_csv(std::istream& in, const est::EwmaConfig& ewma) {
    const auto table = csv::read(in);
    const auto cd = table.column("date"), cf = table.column("factor_id"), cr = table.column("return");
    // Rows grouped by date in file order; factors keyed by id.
    std::vector<std::string> order;
    std::map<std::string, std::map<std::string, double>> by_date;
    std::size_t max_node = 0;
    bool any_node = false;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string& date = row[cd];
        const std::string& id = row[cf];
        if (id != "spot") {
            if (id.size() < 3 || id.compare(0, 2, "iv") != 0)
                throw ConfigError("panel row " + std::to_string(r + 1) + ": unknown factor id '" + id + "'");
            const auto node = static_cast<std::size_t>(csv::to_long(id.substr(2), r + 1, "factor_id"));
            max_node = std::max(max_node, node);
            any_node = true;
        }
        if (!by_date.count(date)) order.push_back(date);
        auto& slot = by_date[date];
        if (slot.count(id)) throw ConfigError("panel: duplicate factor '" + id + "' on " + date);
        slot[id] = csv::to_double(row[cr], r + 1, "return");
    }
    RiskFactorPanel panel;
    panel.ewma = ewma;
    const std::size_t nodes = any_node ? max_node + 1 : 0;
    bool dated = true;
    for (const auto& date : order) {
        const auto& slot = by_date[date];
        if (!slot.count("spot")) throw ConfigError("panel: no spot return on " + date);
        if (slot.size() != nodes + 1) throw ConfigError("panel: missing IV factors on " + date);
        panel.spot_log_returns.push_back(slot.at("spot"));
        std::vector<double> row(nodes);
        for (std::size_t m = 0; m < nodes; ++m) row[m] = slot.at("iv" + std::to_string(m));
        if (nodes) panel.iv_abs_returns.push_back(std::move(row));
        if (date.size() == 10 && date[4] == '-')
            panel.dates.push_back(parse_date(date));
        else
            dated = false;
    }
    if (!dated) panel.dates.clear();
    panel.validate();
    return panel;
}

void write_diagnostics_csv(std::ostream& out, const market::Lattice& lattice, const FhsResult& result) {
    out << "node,tau,k,floored\n";
    for (std::size_t j = 0; j < lattice.taus.size(); ++j)
        for (std::size_t m = 0; m < lattice.ks[j].size(); ++m) {
            const std::size_t f = lattice.flat(j, m);
            out << f << ',' << csv::format_double(lattice.taus[j]) << ','
                << csv::format_double(lattice.ks[j][m]) << ','
                << (f < result.floored_per_node.size() ? result.floored_per_node[f] : 0) << '\n';
        }
}

RiskFactorPanel panel_from_history(const std::vector<double>& spots,
                                   const std::vector<std::vector<double>>& node_vols,
                                   const est::EwmaConfig& ewma) {
    if (spots.size() < 2) throw InsufficientData("FHS panel needs at least two days");
    if (!node_vols.empty() && node_vols.size() != spots.size())
        throw DomainError("FHS panel: spot and surface histories differ in length");
    RiskFactorPanel panel;
    panel.ewma = ewma;
    for (std::size_t d = 1; d < spots.size(); ++d) {
        panel.spot_log_returns.push_back(std::log(spots[d] / spots[d - 1]));
        if (!node_vols.empty()) {
            std::vector<double> row(node_vols[d].size());
            for (std::size_t m = 0; m < row.size(); ++m) row[m] = node_vols[d][m] - node_vols[d - 1][m];
            panel.iv_abs_returns.push_back(std::move(row));
        }
    }
    panel.validate();
    return panel;
}

}  // namespace imargin::fhs
