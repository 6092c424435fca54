#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "imargin/blackscholes.hpp"
#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/marketdata.hpp"

namespace imargin::market {

std::vector<double> standard_grid_taus() {
    std::vector<double> taus;
    for (int d : {2, 5, 10, 21, 42, 63, 126, 252}) taus.push_back(d / 252.0);
    return taus;
}

std::vector<double> standard_grid_deltas() {
    std::vector<double> deltas;
    for (int i = 0; i < 17; ++i) deltas.push_back(0.015 + (0.985 - 0.015) * i / 16.0);
    return deltas;
}

std::size_t Lattice::node_count() const {
    std::size_t n = 0;
    for (const auto& col : ks) n += col.size();
    return n;
}

std::size_t Lattice::flat(std::size_t tau_index, std::size_t k_index) const {
    std::size_t offset = 0;
    for (std::size_t j = 0; j < tau_index; ++j) offset += ks[j].size();
    return offset + k_index;
}

Lattice Lattice::from_deltas(const std::vector<double>& taus, const std::vector<double>& deltas,
                             double symbolic_vol) {
    Lattice lat;
    lat.taus = taus;
    for (double tau : taus) {
        std::vector<double> col;
        for (double d : deltas) col.push_back(bs::k_from_delta(d, tau, symbolic_vol));
        std::sort(col.begin(), col.end());
        lat.ks.push_back(std::move(col));
    }
    return lat;
}

Lattice Lattice::standard() {
    return from_deltas(standard_grid_taus(), standard_grid_deltas(), 0.1);
}

namespace {

// Linear interpolation with flat extrapolation.
double interp_flat(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const auto i = static_cast<std::size_t>(it - xs.begin());
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

void check_shape(const Lattice& lattice, const std::vector<std::vector<double>>& vols) {
    if (lattice.taus.empty() || lattice.taus.size() != lattice.ks.size() ||
        vols.size() != lattice.taus.size())
        throw DomainError("surface grid shape does not match its lattice");
    for (std::size_t j = 0; j < vols.size(); ++j) {
        if (lattice.ks[j].size() < 2 || vols[j].size() != lattice.ks[j].size())
            throw DomainError("surface grid column shape does not match its lattice");
        if (j > 0 && !(lattice.taus[j] > lattice.taus[j - 1]))
            throw DomainError("lattice maturities must be increasing");
        for (std::size_t m = 1; m < lattice.ks[j].size(); ++m)
            if (!(lattice.ks[j][m] > lattice.ks[j][m - 1]))
                throw DomainError("lattice k columns must be increasing");
    }
}

}  // namespace

SurfaceGrid::SurfaceGrid(Lattice lattice, std::vector<std::vector<double>> vols,
                         TermStructure term)
    : lattice_(std::move(lattice)), vols_(std::move(vols)), term_(std::move(term)) {
    check_shape(lattice_, vols_);
    for (const auto& col : vols_)
        for (double v : col)
            if (!(v > 0.0) || !std::isfinite(v))
                throw DomainError("surface grid volatilities must be positive");
}

double SurfaceGrid::slice_iv(std::size_t j, double k) const {
    return interp_flat(lattice_.ks[j], vols_[j], k);
}

SmileSlope SurfaceGrid::slice_slope(std::size_t j, double k) const {
    const auto& ks = lattice_.ks[j];
    const auto& vs = vols_[j];
    const std::size_t n = ks.size();
    auto secant = [&](std::size_t i) { return (vs[i + 1] - vs[i]) / (ks[i + 1] - ks[i]); };
    if (k < ks.front()) return {secant(0), true};
    if (k > ks.back()) return {secant(n - 2), true};
    const auto it = std::lower_bound(ks.begin(), ks.end(), k);
    const auto i = static_cast<std::size_t>(it - ks.begin());
    if (*it == k) {
        if (i == 0) return {secant(0), false};
        if (i == n - 1) return {secant(n - 2), false};
        return {0.5 * (secant(i - 1) + secant(i)), false};
    }
    return {secant(i - 1), false};
}

double SurfaceGrid::iv(double tau, double k) const {
    const auto& ts = lattice_.taus;
    if (tau <= ts.front()) return slice_iv(0, k);
    if (tau >= ts.back()) return slice_iv(ts.size() - 1, k);
    const auto j = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), tau) -
                                            ts.begin()) - 1;
    if (tau == ts[j]) return slice_iv(j, k);
    const double lam = (tau - ts[j]) / (ts[j + 1] - ts[j]);
    const double s0 = slice_iv(j, k), s1 = slice_iv(j + 1, k);
    const double w = (1.0 - lam) * s0 * s0 * ts[j] + lam * s1 * s1 * ts[j + 1];
    return std::sqrt(w / tau);
}

SmileSlope SurfaceGrid::slope_detail(double tau, double k) const {
    const auto& ts = lattice_.taus;
    if (tau <= ts.front()) return slice_slope(0, k);
    if (tau >= ts.back()) return slice_slope(ts.size() - 1, k);
    const auto j = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), tau) -
                                            ts.begin()) - 1;
    if (tau == ts[j]) return slice_slope(j, k);
    const double lam = (tau - ts[j]) / (ts[j + 1] - ts[j]);
    const double s0 = slice_iv(j, k), s1 = slice_iv(j + 1, k);
    const auto d0 = slice_slope(j, k), d1 = slice_slope(j + 1, k);
    const double sigma = iv(tau, k);
    // d/dk of sqrt(w(tau,k)/tau) with w linear in tau between the slices.
    const double dw = (1.0 - lam) * 2.0 * s0 * d0.value * ts[j] +
                      lam * 2.0 * s1 * d1.value * ts[j + 1];
    return {dw / (2.0 * sigma * tau), d0.extrapolated || d1.extrapolated};
}

double SurfaceGrid::smile_slope(double tau, double k) const {
    return slope_detail(tau, k).value;
}

double SurfaceGrid::normalized_call(double tau, double k) const {
    return bs::normalized_call(k, iv(tau, k) * std::sqrt(tau));
}

std::vector<std::vector<double>> SurfaceGrid::normalized_prices() const {
    std::vector<std::vector<double>> out(vols_.size());
    for (std::size_t j = 0; j < vols_.size(); ++j) {
        const double sq = std::sqrt(lattice_.taus[j]);
        for (std::size_t m = 0; m < vols_[j].size(); ++m)
            out[j].push_back(bs::normalized_call(lattice_.ks[j][m], vols_[j][m] * sq));
    }
    return out;
}

std::vector<double> SurfaceGrid::flat_vols() const {
    std::vector<double> out;
    for (const auto& col : vols_) out.insert(out.end(), col.begin(), col.end());
    return out;
}

SurfaceGrid SurfaceGrid::with_vols(std::vector<std::vector<double>> vols) const {
    return SurfaceGrid(lattice_, std::move(vols), term_);
}

SurfaceGrid SurfaceGrid::with_term(TermStructure term) const {
    return SurfaceGrid(lattice_, vols_, std::move(term));
}

GridBuild build_surface_grid(const std::vector<Smile>& input, const TermStructure& term,
                             const Lattice& lattice) {
    GridBuild out;
    std::vector<Smile> smiles;
    for (const auto& s : input) {
        if (s.ks.size() < 2 || s.ks.size() != s.vols.size() || !(s.tau > 0.0)) {
            std::ostringstream msg;
            msg << "maturity " << s.tau << " skipped: fewer than two usable quotes";
            out.warnings.push_back(msg.str());
            continue;
        }
        smiles.push_back(s);
    }
    if (smiles.empty()) throw InsufficientData("no expiry with at least two usable quotes");
    std::sort(smiles.begin(), smiles.end(),
              [](const Smile& a, const Smile& b) { return a.tau < b.tau; });

    std::vector<std::vector<double>> vols(lattice.taus.size());
    for (std::size_t j = 0; j < lattice.taus.size(); ++j) {
        const double tau = lattice.taus[j];
        for (double k : lattice.ks[j]) {
            // Total variance at this k on every quoted expiry, then linear in tau
            // through (0, 0); flat volatility beyond the last expiry.
            double t0 = 0.0, w0 = 0.0, w = 0.0;
            bool found = false;
            for (const auto& s : smiles) {
                const double sig = interp_flat(s.ks, s.vols, k);
                const double w1 = sig * sig * s.tau;
                if (tau <= s.tau) {
                    w = tau == s.tau ? w1 : w0 + (w1 - w0) * (tau - t0) / (s.tau - t0);
                    found = true;
                    break;
                }
                t0 = s.tau;
                w0 = w1;
            }
            if (!found) w = w0 / t0 * tau;
            vols[j].push_back(std::sqrt(w / tau));
        }
    }
    SurfaceGrid raw(lattice, std::move(vols), term);
    auto repair = static_arbitrage_report(raw);
    out.repaired_violations = repair.report.violations.size();
    if (out.repaired_violations > 0) {
        std::ostringstream msg;
        msg << out.repaired_violations << " static-arbitrage violations repaired";
        out.warnings.push_back(msg.str());
    }
    out.grid = std::move(repair.repaired);
    return out;
}

GridBuild build_surface_grid(const std::vector<OptionQuote>& calls, const TermStructure& term,
                             const Lattice& lattice) {
    std::map<Date, std::map<double, std::vector<double>>> by_expiry;
    std::vector<std::string> warnings;
    std::map<Date, double> taus;
    for (const auto& q : calls) {
        const double tau = year_fraction_252(q.as_of, q.expiry);
        if (tau <= 0.0) continue;
        taus[q.expiry] = tau;
        const double fwd = term.forward(tau), df = term.discount(tau);
        const double k = std::log(q.strike / fwd);
        try {
            const double vol = bs::implied_vol(q.mid, {k, tau, 1, fwd, df, 0.0});
            by_expiry[q.expiry][k].push_back(vol);
        } catch (const BoundViolation& e) {
            warnings.push_back(format_date(q.expiry) + " K=" + csv::format_double(q.strike) +
                               ": " + e.what());
        }
    }
    std::vector<Smile> smiles;
    for (const auto& [expiry, points] : by_expiry) {
        Smile s{taus[expiry], {}, {}};
        for (const auto& [k, vs] : points) {
            double acc = 0.0;
            for (double v : vs) acc += v;
            s.ks.push_back(k);
            s.vols.push_back(acc / static_cast<double>(vs.size()));
        }
        if (s.ks.size() < 2) {
            warnings.push_back(format_date(expiry) + " skipped: fewer than two usable quotes");
            continue;
        }
        smiles.push_back(std::move(s));
    }
    auto out = build_surface_grid(smiles, term, lattice);
    out.warnings.insert(out.warnings.begin(), warnings.begin(), warnings.end());
    return out;
}

void write_grid_csv(std::ostream& out, const SurfaceGrid& grid) {
    out << "tau_days,k,sigma\n";
    const auto& lat = grid.lattice();
    for (std::size_t j = 0; j < lat.taus.size(); ++j)
        for (std::size_t m = 0; m < lat.ks[j].size(); ++m)
            out << csv::format_double(lat.taus[j] * 252.0) << ','
                << csv::format_double(lat.ks[j][m]) << ','
                << csv::format_double(grid.vols()[j][m]) << '\n';
}

SurfaceGrid read_grid_csv(std::istream& in, const TermStructure& term) {
    const auto table = csv::read(in);
    const auto ct = table.column("tau_days"), ck = table.column("k"),
               cs = table.column("sigma");
    std::map<double, std::map<double, double>> nodes;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const double tau = csv::to_double(row[ct], r + 1, "tau_days") / 252.0;
        nodes[tau][csv::to_double(row[ck], r + 1, "k")] =
            csv::to_double(row[cs], r + 1, "sigma");
    }
    Lattice lat;
    std::vector<std::vector<double>> vols;
    for (const auto& [tau, col] : nodes) {
        lat.taus.push_back(tau);
        lat.ks.emplace_back();
        vols.emplace_back();
        for (const auto& [k, v] : col) {
            lat.ks.back().push_back(k);
            vols.back().push_back(v);
        }
    }
    return SurfaceGrid(std::move(lat), std::move(vols), term);
}

}  // namespace imargin::market
