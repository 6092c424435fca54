#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>

#include "imargin/backtest.hpp"
#include "imargin/blackscholes.hpp"
#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/parallel.hpp"

namespace imargin::backtest {

struct HestonMarket::Cache {
    explicit Cache(std::size_t n) : grids(n), once(new std::once_flag[n]) {}
    std::vector<std::unique_ptr<market::SurfaceGrid>> grids;
    std::unique_ptr<std::once_flag[]> once;
};

HestonMarket::HestonMarket(heston::HestonParams params, heston::HestonPath path,
                           market::Lattice lattice, Date start)
    : params_(params),
      spot_(std::move(path.spot)),
      variance_(std::move(path.variance)),
      lattice_(std::move(lattice)),
      start_(start) {
    params_.validate();
    if (spot_.size() != variance_.size())
        throw DomainError("HestonMarket: spot and variance histories differ in length");
    if (spot_.empty()) throw InsufficientData("HestonMarket: empty history");
    cache_ = std::make_shared<Cache>(spot_.size());
}

Date HestonMarket::date(std::size_t t) const {
    return start_ + std::chrono::days(static_cast<long>(t));
}

bool HestonMarket::available(std::size_t t) const {
    return t < spot_.size() && std::isfinite(spot_[t]) && spot_[t] > 0.0 &&
           std::isfinite(variance_[t]) && variance_[t] >= 0.0;
}

namespace {

double heston_iv(const heston::HestonParams& p, double s, double v, double k, double tau) {
    const double c = heston::heston_call_price(p, s, v, s * std::exp(k), tau) / s;
    return bs::implied_vol_normalized(c, k, tau);
}

}  // namespace

double HestonMarket::atm_vol(std::size_t t, double tau) const {
    if (!available(t)) throw DomainError("HestonMarket: day " + std::to_string(t) + " is missing");
    return heston_iv(params_, spot_[t], variance_[t], 0.0, tau);
}

const market::SurfaceGrid& HestonMarket::grid(std::size_t t) const {
    if (!available(t)) throw DomainError("HestonMarket: day " + std::to_string(t) + " is missing");
    std::call_once(cache_->once[t], [&] {
        const double s = spot_[t], v = variance_[t];
        std::vector<std::vector<double>> vols(lattice_.taus.size());
        for (std::size_t j = 0; j < lattice_.taus.size(); ++j) {
            const double tau = lattice_.taus[j];
            const auto& ks = lattice_.ks[j];
            vols[j].assign(ks.size(), std::nan(""));
            for (std::size_t m = 0; m < ks.size(); ++m) {
                try {
                    vols[j][m] = heston_iv(params_, s, v, ks[m], tau);
                } catch (const Error&) {
                }
            }
            // A price lost in quadrature noise takes the neighbouring vol.
            for (std::size_t m = 1; m < ks.size(); ++m)
                if (std::isnan(vols[j][m])) vols[j][m] = vols[j][m - 1];
            for (std::size_t m = ks.size(); m-- > 1;)
                if (std::isnan(vols[j][m - 1])) vols[j][m - 1] = vols[j][m];
            if (std::isnan(vols[j].front()))
                throw NumericalError("HestonMarket: no implied vol at maturity " + std::to_string(tau));
        }
        cache_->grids[t] = std::make_unique<market::SurfaceGrid>(lattice_, std::move(vols),
                                                                 market::TermStructure::flat(s));
    });
    if (!cache_->grids[t]) throw NumericalError("HestonMarket: grid of day " + std::to_string(t) + " failed");
    return *cache_->grids[t];
}

void HestonMarket::prepare_grids(std::size_t from, std::size_t to) const {
    to = std::min(to, days());
    if (from >= to) return;
    parallel_for(to - from, [&](std::size_t i) {
        if (available(from + i)) grid(from + i);
    });
}

GridHistory::GridHistory(market::Lattice lattice, Date start, std::vector<double> spots,
                         std::vector<std::optional<market::SurfaceGrid>> grids)
    : lattice_(std::move(lattice)), start_(start), spots_(std::move(spots)), grids_(std::move(grids)) {
    if (spots_.size() != grids_.size()) throw DomainError("GridHistory: spots and grids differ in length");
    if (spots_.empty()) throw InsufficientData("GridHistory: empty history");
}

Date GridHistory::date(std::size_t t) const { return start_ + std::chrono::days(static_cast<long>(t)); }

bool GridHistory::available(std::size_t t) const {
    return t < spots_.size() && grids_[t].has_value() && std::isfinite(spots_[t]) && spots_[t] > 0.0;
}

const market::SurfaceGrid& GridHistory::grid(std::size_t t) const {
    if (!available(t)) throw DomainError("GridHistory: day " + std::to_string(t) + " is missing");
    return *grids_[t];
}

void write_surfaces_csv(std::ostream& out, const MarketSource& source, std::size_t from, std::size_t to) {
    out << "date,spot,tau_days,k,sigma\n";
    const auto& lat = source.lattice();
    for (std::size_t t = from; t < std::min(to, source.days()); ++t) {
        if (!source.available(t)) continue;
        const auto& g = source.grid(t);
        const std::string head = format_date(source.date(t)) + "," + csv::format_double(source.spot(t)) + ",";
        for (std::size_t j = 0; j < lat.taus.size(); ++j)
            for (std::size_t m = 0; m < lat.ks[j].size(); ++m)
                out << head << csv::format_double(lat.taus[j] * 252.0) << ',' << csv::format_double(lat.ks[j][m])
                    << ',' << csv::format_double(g.vols()[j][m]) << '\n';
    }
}

GridHistory read_surfaces_csv(std::istream& in) {
    const auto table = csv::read(in);
    const std::size_t c_date = table.column("date"), c_spot = table.column("spot"),
                      c_tau = table.column("tau_days"), c_k = table.column("k"), c_sigma = table.column("sigma");
    if (table.rows.empty()) throw InsufficientData("surfaces file has no rows");

    struct Day {
        double spot = 0.0;
        std::vector<std::array<double, 3>> nodes;
    };
    std::map<Date, Day> days;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const Date d = parse_date(row[c_date]);
        auto& day = days[d];
        const double spot = csv::to_double(row[c_spot], r, "spot");
        if (!day.nodes.empty() && spot != day.spot)
            throw ConfigError("surfaces file: two spots on " + row[c_date]);
        day.spot = spot;
        day.nodes.push_back({csv::to_double(row[c_tau], r, "tau_days") / 252.0, csv::to_double(row[c_k], r, "k"),
                             csv::to_double(row[c_sigma], r, "sigma")});
    }

    // The lattice is the node set of the first day, ordered by (tau, k).
    auto first = days.begin()->second.nodes;
    std::sort(first.begin(), first.end());
    market::Lattice lat;
    for (const auto& n : first) {
        if (lat.taus.empty() || n[0] != lat.taus.back()) {
            lat.taus.push_back(n[0]);
            lat.ks.emplace_back();
        }
        lat.ks.back().push_back(n[1]);
    }

    const Date start = days.begin()->first;
    const auto n_days = static_cast<std::size_t>((days.rbegin()->first - start).count()) + 1;
    std::vector<double> spots(n_days, std::nan(""));
    std::vector<std::optional<market::SurfaceGrid>> grids(n_days);
    for (auto& [d, day] : days) {
        auto nodes = day.nodes;
        std::sort(nodes.begin(), nodes.end());
        if (nodes.size() != first.size())
            throw ConfigError("surfaces file: " + format_date(d) + " does not have the lattice of the first day");
        std::vector<std::vector<double>> vols(lat.taus.size());
        std::size_t i = 0;
        for (std::size_t j = 0; j < lat.taus.size(); ++j)
            for (std::size_t m = 0; m < lat.ks[j].size(); ++m, ++i) {
                if (nodes[i][0] != lat.taus[j] || nodes[i][1] != lat.ks[j][m])
                    throw ConfigError("surfaces file: " + format_date(d) + " does not have the lattice of the first day");
                vols[j].push_back(nodes[i][2]);
            }
        const auto t = static_cast<std::size_t>((d - start).count());
        spots[t] = day.spot;
        grids[t].emplace(lat, std::move(vols), market::TermStructure::flat(day.spot));
    }
    return GridHistory(lat, start, std::move(spots), std::move(grids));
}

}  // namespace imargin::backtest
