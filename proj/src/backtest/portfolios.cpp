#include <cmath>
#include <cstdio>
#include <string>

#include "imargin/backtest.hpp"
#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"

namespace imargin::backtest {

namespace {

const double kTaus[] = {30.0, 90.0, 180.0, 365.0};

std::string delta_tag(double delta) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "d%.2f", delta);
    return buf;
}

std::string tau_tag(double days) { return "t" + std::to_string(static_cast<int>(days)); }

struct Point {
    bool atm;
    double delta;
    std::string tag;
};

Leg make_leg(const Point& p, double tau_days, double strike_tau_days, double quantity) {
    Leg leg;
    leg.anchor = p.atm ? Anchor::atm : Anchor::delta;
    leg.level = p.atm ? 0.0 : p.delta;
    leg.tau_days = tau_days;
    leg.strike_tau_days = strike_tau_days;
    leg.quantity = quantity;
    return leg;
}

}  // namespace

const char* to_string(SpecKind kind) {
    switch (kind) {
        case SpecKind::outright: return "outright";
        case SpecKind::calendar: return "calendar";
        case SpecKind::butterfly: return "butterfly";
    }
    return "?";
}

std::vector<PortfolioSpec> make_portfolios() {
    const std::vector<Point> points{{false, 0.2, delta_tag(0.2)},
                                    {false, 0.35, delta_tag(0.35)},
                                    {true, 0.0, "atm"},
                                    {false, 0.65, delta_tag(0.65)},
                                    {false, 0.8, delta_tag(0.8)}};
    std::vector<PortfolioSpec> specs;

    for (const auto& p : points)
        for (double tau : kTaus)
            specs.push_back({"out_" + p.tag + "_" + tau_tag(tau), SpecKind::outright,
                             {make_leg(p, tau, tau, 1.0)}});

    for (const auto& p : points)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = i + 1; j < 4; ++j) {
                const double t1 = kTaus[i], t2 = kTaus[j];
                specs.push_back({"cal_" + p.tag + "_" + tau_tag(t1) + "_" + tau_tag(t2),
                                 SpecKind::calendar,
                                 {make_leg(p, t1, t1, -1.0), make_leg(p, t2, t1, 1.0)}});
            }

    const Point atm{true, 0.0, "atm"};
    for (double delta : {0.1, 0.2, 0.3, 0.35, 0.4, 0.45})
        for (double tau : kTaus) {
            const Point lo{false, delta, delta_tag(delta)};
            const Point hi{false, 1.0 - delta, delta_tag(1.0 - delta)};
            specs.push_back({"bfly_" + lo.tag + "_" + tau_tag(tau), SpecKind::butterfly,
                             {make_leg(lo, tau, tau, 1.0), make_leg(hi, tau, tau, 1.0),
                              make_leg(atm, tau, tau, -2.0)}});
        }
    return specs;
}

std::vector<PortfolioSpec> procyclicality_portfolios() {
    const Point atm{true, 0.0, "atm"};
    PortfolioSpec calendar{"cal_atm_1m_6m", SpecKind::calendar,
                           {make_leg(atm, 30.0, 30.0, -1.0), make_leg(atm, 180.0, 30.0, 1.0)}};
    PortfolioSpec fly{"bfly_m0.9_1.1_3m", SpecKind::butterfly, {}};
    for (auto [m, q] : {std::pair{0.9, 1.0}, std::pair{1.0, -2.0}, std::pair{1.1, 1.0}}) {
        Leg leg;
        leg.anchor = Anchor::moneyness;
        leg.level = m;
        leg.tau_days = 90.0;
        leg.strike_tau_days = 90.0;
        leg.quantity = q;
        fly.legs.push_back(leg);
    }
    return {calendar, fly};
}

Portfolio resolve(const PortfolioSpec& spec, double spot, const std::function<double(double)>& atm_vol) {
    if (!(spot > 0.0) || !std::isfinite(spot)) throw DomainError("resolve: spot must be positive");
    Portfolio pf;
    for (const auto& leg : spec.legs) {
        Position pos;
        pos.kind = Instrument::call;
        pos.quantity = leg.quantity;
        pos.tau = leg.tau_days / 365.0;
        switch (leg.anchor) {
            case Anchor::atm: pos.strike = spot; break;
            case Anchor::moneyness: pos.strike = leg.level * spot; break;
            case Anchor::delta: {
                const double tau_k = leg.strike_tau_days / 365.0;
                pos.strike = spot * std::exp(bs::k_from_delta(leg.level, tau_k, atm_vol(tau_k)));
                break;
            }
        }
        pos.label = spec.id;
        pf.push_back(pos);
    }
    return pf;
}

}  // namespace imargin::backtest
