#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <boost/math/distributions/binomial.hpp>

#include "imargin/backtest.hpp"
#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/stats.hpp"

namespace imargin::backtest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

const char* to_string(Method m) {
    switch (m) {
        case Method::sv: return "sv";
        case Method::shortterm: return "shortterm";
        case Method::shortterm_t: return "shortterm-t";
        case Method::fhs: return "fhs";
    }
    return "?";
}

Method method_from_string(const std::string& name) {
    for (Method m : {Method::sv, Method::shortterm, Method::shortterm_t, Method::fhs})
        if (name == to_string(m)) return m;
    throw ConfigError("unknown backtest method '" + name + "'");
}

DayRow make_row(std::size_t day, Date date, double var, double pnl, double value) {
    DayRow row;
    row.day = day;
    row.date = date;
    row.var = var;
    row.pnl = pnl;
    row.value = value;
    row.breach = pnl < var;
    row.breach_size = row.breach && value != 0.0 ? (var - pnl) / std::abs(value) : kNaN;
    return row;
}

Aggregates aggregate(const std::vector<DayRow>& rows) {
    Aggregates a;
    std::vector<double> sizes, vars;
    for (const auto& r : rows) {
        if (!r.error.empty()) continue;
        ++a.tested;
        vars.push_back(r.var);
        if (!r.breach) continue;
        ++a.breaches;
        if (std::isfinite(r.breach_size)) sizes.push_back(r.breach_size);
    }
    a.coverage = a.tested ? 1.0 - static_cast<double>(a.breaches) / static_cast<double>(a.tested) : kNaN;
    a.sized_breaches = sizes.size();
    a.size_of_loss_mean = sizes.empty() ? kNaN : mean(sizes);
    a.size_of_loss_median = sizes.empty() ? kNaN : median(sizes);

    const auto& n_list = procyclicality_horizons();
    a.peak_to_trough = kNaN;
    a.n_day_pct.assign(n_list.size(), kNaN);
    const bool finite = std::all_of(vars.begin(), vars.end(), [](double v) { return std::isfinite(v); });
    if (finite) {
        try {
            const auto p = procyclicality_metrics(vars, n_list);
            a.peak_to_trough = p.peak_to_trough;
            a.n_day_pct = p.n_day_pct;
        } catch (const Error&) {
        }
    }
    return a;
}

TableRow summarize(const std::vector<BacktestReport>& reports) {
    TableRow row;
    if (reports.empty()) return row;
    row.method = reports.front().method;
    row.mpor_days = reports.front().mpor_days;
    std::vector<double> coverage, size_mean;
    for (const auto& r : reports) {
        if (std::isfinite(r.agg.coverage)) coverage.push_back(r.agg.coverage);
        if (r.agg.breaches > 0) ++row.with_breaches;
        if (std::isfinite(r.agg.size_of_loss_mean)) size_mean.push_back(r.agg.size_of_loss_mean);
    }
    row.portfolios = coverage.size();
    row.coverage_mean = coverage.empty() ? kNaN : mean(coverage);
    row.coverage_median = coverage.empty() ? kNaN : median(coverage);
    row.size_of_loss_mean = size_mean.empty() ? kNaN : mean(size_mean);
    row.size_of_loss_median = size_mean.empty() ? kNaN : median(size_mean);
    return row;
}

Procyclicality procyclicality_metrics(const std::vector<double>& var_series, const std::vector<int>& n_list) {
    int max_n = 0;
    for (int n : n_list) {
        if (n <= 0) throw DomainError("procyclicality: horizons must be positive");
        max_n = std::max(max_n, n);
    }
    if (var_series.size() <= static_cast<std::size_t>(max_n))
        throw InsufficientData("procyclicality: series not longer than the largest horizon");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : var_series) {
        lo = std::min(lo, -v);
        hi = std::max(hi, -v);
    }
    if (lo == 0.0) throw DomainError("procyclicality: peak-to-trough undefined, min(-VaR) = 0");

    Procyclicality p;
    p.peak_to_trough = hi / lo;
    for (int n : n_list) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t t = static_cast<std::size_t>(n); t < var_series.size(); ++t)
            best = std::max(best, var_series[t] / var_series[t - n] - 1.0);
        p.n_day_pct.push_back(best * 100.0);
    }
    return p;
}

CoverageBand kupiec_band(std::size_t n, double theta, double confidence) {
    if (n == 0) throw InsufficientData("kupiec_band: no tested days");
    if (!(theta > 0.0 && theta < 1.0) || !(confidence > 0.0 && confidence < 1.0))
        throw DomainError("kupiec_band: theta and confidence must lie in (0,1)");
    const boost::math::binomial_distribution<double> law(static_cast<double>(n), 1.0 - theta);
    const double tail = 0.5 * (1.0 - confidence);
    CoverageBand band;
    // smallest lo with P(X < lo) <= tail, largest hi with P(X > hi) <= tail
    std::size_t lo = 0;
    while (lo < n && boost::math::cdf(law, static_cast<double>(lo)) <= tail) ++lo;
    std::size_t hi = n;
    while (hi > 0 && boost::math::cdf(boost::math::complement(law, static_cast<double>(hi - 1))) <= tail) --hi;
    band.min_breaches = lo;
    band.max_breaches = hi;
    band.coverage_low = 1.0 - static_cast<double>(hi) / static_cast<double>(n);
    band.coverage_high = 1.0 - static_cast<double>(lo) / static_cast<double>(n);
    return band;
}

double net_option_value(const std::vector<MarginLine>& lines) {
    double nov = 0.0;
    for (const auto& l : lines)
        if (l.equity_style) nov += l.quantity * l.price;
    return nov;
}

double unpaid_premium(const std::vector<MarginLine>& lines) {
    double up = 0.0;
    for (const auto& l : lines)
        if (!l.premium_settled) up += l.quantity * l.price;
    return up;
}

double total_risk_requirement(double im, double addons, double som, double nov, double up) {
    return std::max(std::max(im + addons, som) - nov + up, 0.0);
}

void write_report_csv(std::ostream& out, const std::vector<BacktestReport>& reports) {
    out << "spec_id,date,var,pnl,breach,breach_size\n";
    for (const auto& r : reports)
        for (const auto& d : r.rows) {
            if (!d.error.empty()) continue;
            out << r.spec_id << ',' << format_date(d.date) << ',' << csv::format_double(d.var) << ','
                << csv::format_double(d.pnl) << ',' << (d.breach ? 1 : 0) << ','
                << csv::format_double(d.breach_size) << '\n';
        }
}

void write_summary_csv(std::ostream& out, const std::vector<BacktestReport>& reports) {
    out << "spec_id,method,mpor_days,theta,tested,breaches,coverage,size_of_loss_mean,"
           "size_of_loss_median,peak_to_trough";
    for (int n : procyclicality_horizons()) out << ",pct_" << n << "d";
    out << '\n';
    for (const auto& r : reports) {
        out << r.spec_id << ',' << to_string(r.method) << ',' << r.mpor_days << ','
            << csv::format_double(r.theta) << ',' << r.agg.tested << ',' << r.agg.breaches << ','
            << csv::format_double(r.agg.coverage) << ',' << csv::format_double(r.agg.size_of_loss_mean) << ','
            << csv::format_double(r.agg.size_of_loss_median) << ','
            << csv::format_double(r.agg.peak_to_trough);
        for (double x : r.agg.n_day_pct) out << ',' << csv::format_double(x);
        out << '\n';
    }
}

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
    out << "method,mpor_days,portfolios,coverage_mean,coverage_median,with_breaches,"
           "size_of_loss_mean,size_of_loss_median\n";
    for (const auto& r : rows)
        out << to_string(r.method) << ',' << r.mpor_days << ',' << r.portfolios << ','
            << csv::format_double(r.coverage_mean) << ',' << csv::format_double(r.coverage_median) << ','
            << r.with_breaches << ',' << csv::format_double(r.size_of_loss_mean) << ','
            << csv::format_double(r.size_of_loss_median) << '\n';
}

}  // namespace imargin::backtest
