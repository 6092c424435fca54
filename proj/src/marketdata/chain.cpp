#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/marketdata.hpp"

namespace imargin::market {

std::vector<OptionQuote> read_chain_csv(std::istream& in) {
    const auto table = csv::read(in);
    const auto c_asof = table.column("as_of"), c_exp = table.column("expiry"),
               c_omega = table.column("omega"), c_strike = table.column("strike"),
               c_mid = table.column("mid"), c_vol = table.column("volume");
    std::vector<OptionQuote> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        OptionQuote q;
        q.as_of = parse_date(row[c_asof]);
        q.expiry = parse_date(row[c_exp]);
        const auto& w = row[c_omega];
        if (w == "C" || w == "c" || w == "call")
            q.omega = 1;
        else if (w == "P" || w == "p" || w == "put")
            q.omega = -1;
        else
            q.omega = static_cast<int>(csv::to_long(w, r + 1, "omega"));
        if (q.omega != 1 && q.omega != -1)
            throw ConfigError("row " + std::to_string(r + 1) + ": omega must be +1 or -1");
        q.strike = csv::to_double(row[c_strike], r + 1, "strike");
        q.mid = csv::to_double(row[c_mid], r + 1, "mid");
        q.volume = csv::to_double(row[c_vol], r + 1, "volume");
        out.push_back(q);
    }
    return out;
}

std::vector<OptionQuote> read_chain_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open chain file '" + path + "'");
    return read_chain_csv(in);
}

DiscountForward extract_forward_discount(const std::vector<OptionQuote>& chain, Date expiry) {
    // Calls and puts are paired strike by strike in input order.
    std::multimap<double, double> calls, puts;
    for (const auto& q : chain) {
        if (q.expiry != expiry) continue;
        auto& side = q.omega == 1 ? calls : puts;
        side.emplace(q.strike, q.mid);
    }
    std::vector<double> xs, ys;
    for (auto it = calls.begin(); it != calls.end();) {
        const auto [c_lo, c_hi] = calls.equal_range(it->first);
        auto [p_lo, p_hi] = puts.equal_range(it->first);
        for (auto c = c_lo; c != c_hi && p_lo != p_hi; ++c, ++p_lo) {
            xs.push_back(c->first);
            ys.push_back(c->second - p_lo->second);
        }
        it = c_hi;
    }
    if (xs.size() < 2)
        throw InsufficientData("forward/discount extraction needs at least two put/call pairs");

    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 1e-14 * mx * mx * n)
        throw NumericalError("forward/discount regression is rank deficient (equal strikes)");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    const double df = -slope;
    const double fwd = intercept / df;
    if (!(df > 0.0 && df < 1.2) || !(fwd > 0.0) || !std::isfinite(fwd)) {
        std::ostringstream msg;
        msg << "put-call parity fit gave DF=" << df << ", F=" << fwd;
        throw NumericalError(msg.str());
    }
    return {df, fwd};
}

TermFit fit_term_structure(const std::vector<OptionQuote>& chain, double spot) {
    std::vector<OptionQuote> traded;
    for (const auto& q : chain)
        if (q.volume > 0.0) traded.push_back(q);
    std::set<Date> expiries;
    for (const auto& q : traded) expiries.insert(q.expiry);

    TermFit fit;
    std::vector<Pillar> pillars;
    for (Date e : expiries) {
        Date as_of{};
        for (const auto& q : traded)
            if (q.expiry == e) as_of = q.as_of;
        const double tau = year_fraction_252(as_of, e);
        if (tau <= 0.0) {
            fit.skipped.push_back(e);
            continue;
        }
        try {
            const auto df = extract_forward_discount(traded, e);
            pillars.push_back({tau, df.discount, df.forward});
            fit.expiries.push_back(e);
        } catch (const Error&) {
            fit.skipped.push_back(e);
        }
    }
    fit.term = TermStructure(spot, std::move(pillars));
    return fit;
}

SanitizedChain sanitize_chain(const std::vector<OptionQuote>& chain, const TermStructure& term) {
    SanitizedChain out;
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const auto& q = chain[i];
        auto drop = [&](const char* reason) { out.dropped.push_back({i, reason}); };
        if (!(q.volume > 0.0)) {
            drop("zero volume");
            continue;
        }
        if (!(q.strike > 0.0) || !(q.mid >= 0.0)) {
            drop("invalid quote");
            continue;
        }
        const double tau = year_fraction_252(q.as_of, q.expiry);
        if (tau <= 0.0) {
            drop("expired");
            continue;
        }
        const double df = term.discount(tau), fwd = term.forward(tau);
        if (q.omega == 1) {
            if (q.mid < df * std::max(fwd - q.strike, 0.0)) {
                drop("lower bound");
                continue;
            }
            if (q.mid > df * fwd) {
                drop("upper bound");
                continue;
            }
            out.calls.push_back(q);
        } else {
            if (q.mid < df * std::max(q.strike - fwd, 0.0)) {
                drop("lower bound");
                continue;
            }
            if (q.mid > df * q.strike) {
                drop("upper bound");
                continue;
            }
            OptionQuote c = q;
            c.omega = 1;
            c.mid = q.mid + df * (fwd - q.strike);
            out.calls.push_back(c);
        }
    }
    std::stable_sort(out.calls.begin(), out.calls.end(),
                     [](const OptionQuote& a, const OptionQuote& b) {
                         if (a.expiry != b.expiry) return a.expiry < b.expiry;
                         return a.strike < b.strike;
                     });
    return out;
}

}  // namespace imargin::market
