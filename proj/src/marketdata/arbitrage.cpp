#include <algorithm>
#include <array>
#include <cmath>

#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "imargin/marketdata.hpp"

namespace imargin::market {

const char* to_string(ArbitrageKind kind) {
    switch (kind) {
        case ArbitrageKind::lower_bound: return "lower bound";
        case ArbitrageKind::upper_bound: return "upper bound";
        case ArbitrageKind::monotonicity: return "monotonicity";
        case ArbitrageKind::convexity: return "convexity";
        case ArbitrageKind::calendar: return "calendar";
    }
    return "unknown";
}

std::size_t ArbitrageReport::count(ArbitrageKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        violations.begin(), violations.end(), [kind](const Violation& v) { return v.kind == kind; }));
}

namespace {

constexpr double level_tol = 1e-12;
constexpr double slope_tol = 1e-9;
// Repaired prices stay strictly inside the bounds so every node keeps a
// finite, positive implied volatility.
constexpr double bound_margin = 1e-12;

// Piecewise-linear interpolation of a slice in strike coordinate x = e^k;
// only defined inside the slice's k range.
bool slice_value(const std::vector<double>& ks, const std::vector<double>& cs, double k,
                 double& out) {
    if (k < ks.front() || k > ks.back()) return false;
    const auto it = std::lower_bound(ks.begin(), ks.end(), k);
    const auto i = static_cast<std::size_t>(it - ks.begin());
    if (*it == k) {
        out = cs[i];
        return true;
    }
    const double x0 = std::exp(ks[i - 1]), x1 = std::exp(ks[i]), x = std::exp(k);
    out = cs[i - 1] + (cs[i] - cs[i - 1]) * (x - x0) / (x1 - x0);
    return true;
}

// a . c >= b over at most three consecutive coordinates.
struct HalfSpace {
    std::size_t first;
    std::size_t len;
    std::array<double, 3> a;
    double b;
    double norm2;
};

std::vector<double> project_slice(const std::vector<double>& ks, const std::vector<double>& y,
                                  const std::vector<double>& lower, double upper) {
    const std::size_t n = y.size();
    std::vector<HalfSpace> cons;
    for (std::size_t m = 0; m < n; ++m) {
        cons.push_back({m, 1, {1.0, 0.0, 0.0}, lower[m], 1.0});
        cons.push_back({m, 1, {-1.0, 0.0, 0.0}, -upper, 1.0});
    }
    for (std::size_t m = 0; m + 1 < n; ++m) cons.push_back({m, 2, {1.0, -1.0, 0.0}, 0.0, 2.0});
    for (std::size_t m = 1; m + 1 < n; ++m) {
        const double x0 = std::exp(ks[m - 1]), x1 = std::exp(ks[m]), x2 = std::exp(ks[m + 1]);
        const double l = 1.0 / (x1 - x0), r = 1.0 / (x2 - x1);
        // Rescaled so the coefficients are O(1).
        const double s = 1.0 / (l + r);
        HalfSpace h{m - 1, 3, {l * s, -(l + r) * s, r * s}, 0.0, 0.0};
        h.norm2 = h.a[0] * h.a[0] + h.a[1] * h.a[1] + h.a[2] * h.a[2];
        cons.push_back(h);
    }

    // Dykstra's alternating projections converge to the nearest point of the
    // intersection.
    std::vector<double> c = y;
    std::vector<std::array<double, 3>> incr(cons.size(), {0.0, 0.0, 0.0});
    for (int sweep = 0; sweep < 200000; ++sweep) {
        double change = 0.0;
        for (std::size_t i = 0; i < cons.size(); ++i) {
            const auto& h = cons[i];
            std::array<double, 3> z{};
            double dot = 0.0;
            for (std::size_t t = 0; t < h.len; ++t) {
                z[t] = c[h.first + t] + incr[i][t];
                dot += h.a[t] * z[t];
            }
            const double gap = h.b - dot;
            const double step = gap > 0.0 ? gap / h.norm2 : 0.0;
            for (std::size_t t = 0; t < h.len; ++t) {
                const double next = z[t] + step * h.a[t];
                incr[i][t] = z[t] - next;
                change = std::max(change, std::abs(next - c[h.first + t]));
                c[h.first + t] = next;
            }
        }
        if (change < 1e-16) break;
    }
    for (std::size_t m = 0; m < n; ++m) c[m] = std::clamp(c[m], lower[m], upper);
    return c;
}

void detect_slice(std::size_t j, const std::vector<double>& ks, const std::vector<double>& c,
                  const std::vector<double>* prev_ks, const std::vector<double>* prev_c,
                  std::vector<Violation>& out) {
    const std::size_t n = c.size();
    for (std::size_t m = 0; m < n; ++m) {
        const double lo = bs::normalized_intrinsic(ks[m]);
        if (c[m] < lo - level_tol) out.push_back({j, m, ArbitrageKind::lower_bound, lo - c[m]});
        if (c[m] > 1.0 + level_tol)
            out.push_back({j, m, ArbitrageKind::upper_bound, c[m] - 1.0});
        if (m + 1 < n && c[m + 1] > c[m] + level_tol)
            out.push_back({j, m + 1, ArbitrageKind::monotonicity, c[m + 1] - c[m]});
        if (m > 0 && m + 1 < n) {
            const double x0 = std::exp(ks[m - 1]), x1 = std::exp(ks[m]), x2 = std::exp(ks[m + 1]);
            const double left = (c[m] - c[m - 1]) / (x1 - x0);
            const double right = (c[m + 1] - c[m]) / (x2 - x1);
            if (right < left - slope_tol)
                out.push_back({j, m, ArbitrageKind::convexity, left - right});
        }
        double prior = 0.0;
        if (prev_ks && slice_value(*prev_ks, *prev_c, ks[m], prior) && c[m] < prior - level_tol)
            out.push_back({j, m, ArbitrageKind::calendar, prior - c[m]});
    }
}

}  // namespace

ArbitrageReport static_arbitrage_report(const Lattice& lattice,
                                        const std::vector<std::vector<double>>& prices) {
    if (prices.size() != lattice.taus.size())
        throw DomainError("price slices do not match the lattice");
    ArbitrageReport report;
    for (std::size_t j = 0; j < prices.size(); ++j) {
        if (prices[j].size() != lattice.ks[j].size())
            throw DomainError("price slice does not match its lattice column");
        detect_slice(j, lattice.ks[j], prices[j], j > 0 ? &lattice.ks[j - 1] : nullptr,
                     j > 0 ? &prices[j - 1] : nullptr, report.violations);
    }

    report.repaired_prices = prices;
    if (report.violations.empty()) return report;

    for (std::size_t j = 0; j < prices.size(); ++j) {
        const auto& ks = lattice.ks[j];
        std::vector<double> lower(ks.size());
        for (std::size_t m = 0; m < ks.size(); ++m) {
            lower[m] = bs::normalized_intrinsic(ks[m]) + bound_margin;
            double prior = 0.0;
            if (j > 0 &&
                slice_value(lattice.ks[j - 1], report.repaired_prices[j - 1], ks[m], prior))
                lower[m] = std::max(lower[m], prior);
        }
        // Only slices that break a constraint are moved.
        std::vector<Violation> own;
        detect_slice(j, ks, prices[j], j > 0 ? &lattice.ks[j - 1] : nullptr,
                     j > 0 ? &report.repaired_prices[j - 1] : nullptr, own);
        bool inside = own.empty();
        for (std::size_t m = 0; m < ks.size() && inside; ++m)
            inside = prices[j][m] >= lower[m] && prices[j][m] <= 1.0 - bound_margin;
        if (!inside)
            report.repaired_prices[j] = project_slice(ks, prices[j], lower, 1.0 - bound_margin);
    }
    return report;
}

GridRepair static_arbitrage_report(const SurfaceGrid& grid) {
    const auto prices = grid.normalized_prices();
    auto report = static_arbitrage_report(grid.lattice(), prices);
    auto vols = grid.vols();
    const auto& lat = grid.lattice();
    for (std::size_t j = 0; j < vols.size(); ++j)
        for (std::size_t m = 0; m < vols[j].size(); ++m)
            if (report.repaired_prices[j][m] != prices[j][m])
                vols[j][m] = bs::implied_vol_normalized(report.repaired_prices[j][m],
                                                        lat.ks[j][m], lat.taus[j]);
    return {std::move(report), grid.with_vols(std::move(vols))};
}

}  // namespace imargin::market
