#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "imargin/backtest.hpp"
#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "imargin/parallel.hpp"
#include "imargin/random.hpp"
#include "imargin/stats.hpp"
#include "support.hpp"

using Catch::Approx;
using namespace imargin;
using namespace imargin::backtest;

namespace {

const Date kStart = parse_date("2024-01-02");

// P(X <= x) for X ~ Binomial(n, p) by direct summation in log space.
double binom_cdf(std::size_t n, double p, long x) {
    if (x < 0) return 0.0;
    double acc = 0.0;
    for (long i = 0; i <= x && i <= static_cast<long>(n); ++i) {
        const double lg = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
                          i * std::log(p) + (n - i) * std::log1p(-p);
        acc += std::exp(lg);
    }
    return acc;
}

std::vector<DayRow> rows_from(const std::vector<double>& var, const std::vector<double>& pnl,
                              const std::vector<double>& value) {
    std::vector<DayRow> rows;
    for (std::size_t i = 0; i < var.size(); ++i)
        rows.push_back(make_row(i, kStart + std::chrono::days(i), var[i], pnl[i], value[i]));
    return rows;
}

HestonMarket small_market(std::size_t days, std::uint64_t seed) {
    const auto p = heston::HestonParams::reference();
    return HestonMarket(p, heston::simulate_paths(p, days, seed), market::Lattice::standard(), kStart);
}

const PortfolioSpec& spec_by_id(const std::vector<PortfolioSpec>& specs, const std::string& id) {
    for (const auto& s : specs)
        if (s.id == id) return s;
    throw std::runtime_error("no spec " + id);
}

}  // namespace

TEST_CASE("make_portfolios builds 20 outrights, 30 calendars and 24 butterflies") {
    const auto specs = make_portfolios();
    REQUIRE(specs.size() == 74);
    std::map<SpecKind, int> count;
    std::set<std::string> ids;
    for (const auto& s : specs) {
        ++count[s.kind];
        ids.insert(s.id);
    }
    CHECK(count[SpecKind::outright] == 20);
    CHECK(count[SpecKind::calendar] == 30);
    CHECK(count[SpecKind::butterfly] == 24);
    CHECK(ids.size() == 74);

    for (const auto& s : specs) {
        if (s.kind == SpecKind::calendar) {
            REQUIRE(s.legs.size() == 2);
            CHECK(s.legs[0].quantity == -1.0);
            CHECK(s.legs[1].quantity == 1.0);
            CHECK(s.legs[0].quantity + s.legs[1].quantity == 0.0);
            CHECK(s.legs[1].tau_days > s.legs[0].tau_days);
            CHECK(s.legs[0].strike_tau_days == s.legs[0].tau_days);
            CHECK(s.legs[1].strike_tau_days == s.legs[0].tau_days);
        }
        if (s.kind == SpecKind::butterfly) {
            REQUIRE(s.legs.size() == 3);
            CHECK(s.legs[0].quantity == 1.0);
            CHECK(s.legs[1].quantity == 1.0);
            CHECK(s.legs[2].quantity == -2.0);
            CHECK(s.legs[2].anchor == Anchor::atm);
            CHECK(s.legs[0].level + s.legs[1].level == Approx(1.0));
        }
    }
    std::set<double> fly_deltas;
    for (const auto& s : specs)
        if (s.kind == SpecKind::butterfly) fly_deltas.insert(s.legs[0].level);
    CHECK(fly_deltas == std::set<double>{0.1, 0.2, 0.3, 0.35, 0.4, 0.45});
}

TEST_CASE("resolve places strikes at the requested delta") {
    const auto specs = make_portfolios();
    const double spot = 2054.0;
    auto atm = [](double tau) { return 0.15 + 0.02 * tau; };
    testing::Gen gen(11);
    for (int trial = 0; trial < 30; ++trial) {
        const auto& spec = specs[gen.integer(0, static_cast<int>(specs.size()) - 1)];
        const auto pf = resolve(spec, spot, atm);
        REQUIRE(pf.size() == spec.legs.size());
        for (std::size_t i = 0; i < pf.size(); ++i) {
            const auto& leg = spec.legs[i];
            CHECK(pf[i].tau == Approx(leg.tau_days / 365.0));
            CHECK(pf[i].quantity == leg.quantity);
            if (leg.anchor == Anchor::atm) {
                CHECK(pf[i].strike == spot);
            } else {
                const double tk = leg.strike_tau_days / 365.0;
                const double s = atm(tk) * std::sqrt(tk);
                const double d1 = (-std::log(pf[i].strike / spot) + 0.5 * s * s) / s;
                CHECK(testing::Phi(d1) == Approx(leg.level).margin(1e-12));
            }
        }
    }
    const auto cal = resolve(spec_by_id(specs, "cal_d0.35_t30_t180"), spot, atm);
    CHECK(cal[0].strike == cal[1].strike);

    const auto proc = procyclicality_portfolios();
    REQUIRE(proc.size() == 2);
    const auto fly = resolve(proc[1], spot, atm);
    CHECK(fly[0].strike == Approx(0.9 * spot));
    CHECK(fly[1].strike == spot);
    CHECK(fly[2].strike == Approx(1.1 * spot));
    CHECK(fly[1].quantity == -2.0);

    CHECK_THROWS_AS(resolve(proc[0], 0.0, atm), DomainError);
}

TEST_CASE("a capped VaR never breaches") {
    const double inf = std::numeric_limits<double>::infinity();
    testing::Gen gen(3);
    std::vector<double> var(200, -inf), pnl, value(200, 10.0);
    for (int i = 0; i < 200; ++i) pnl.push_back(100.0 * gen.normal());
    const auto a = aggregate(rows_from(var, pnl, value));
    CHECK(a.tested == 200);
    CHECK(a.breaches == 0);
    CHECK(a.coverage == 1.0);
    CHECK(std::isnan(a.size_of_loss_mean));
}

TEST_CASE("zero VaR on symmetric noise covers half the days") {
    const std::size_t n = 4000;
    testing::Gen gen(17);
    std::vector<double> var(n, 0.0), pnl, value(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) pnl.push_back(gen.normal());
    const auto a = aggregate(rows_from(var, pnl, value));
    // binomial(4000, 1/2) sd of the coverage: 0.0079
    CHECK(std::abs(a.coverage - 0.5) < 4.0 * 0.5 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("breach flag and size follow the row definition") {
    auto r = make_row(0, kStart, -2.0, -3.0, -4.0);
    CHECK(r.breach);
    CHECK(r.breach_size == Approx(0.25));
    r = make_row(0, kStart, -2.0, -2.0, 4.0);
    CHECK_FALSE(r.breach);
    CHECK(std::isnan(r.breach_size));
    r = make_row(0, kStart, -2.0, -5.0, 0.0);
    CHECK(r.breach);
    CHECK(std::isnan(r.breach_size));
}

TEST_CASE("aggregates are recomputable from the rows") {
    testing::Gen gen(23);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = gen.integer(25, 120);
        std::vector<DayRow> rows;
        for (int i = 0; i < n; ++i) {
            const double value = gen.coin() ? gen.uniform(-50.0, 50.0) : (gen.integer(0, 9) == 0 ? 0.0 : 5.0);
            auto row = make_row(i, kStart + std::chrono::days(i), -gen.uniform(0.5, 3.0), 1.5 * gen.normal(), value);
            if (gen.integer(0, 14) == 0) row.error = "failed";
            rows.push_back(row);
        }
        const auto a = aggregate(rows);
        std::size_t tested = 0, breaches = 0;
        std::vector<double> sizes, vars;
        for (const auto& r : rows) {
            if (!r.error.empty()) continue;
            ++tested;
            vars.push_back(r.var);
            if (r.pnl < r.var) {
                ++breaches;
                if (r.value != 0.0) sizes.push_back((r.var - r.pnl) / std::abs(r.value));
            }
        }
        CHECK(a.tested == tested);
        CHECK(a.breaches == breaches);
        CHECK(a.coverage == Approx(1.0 - double(breaches) / double(tested)));
        CHECK(a.coverage >= 0.0);
        CHECK(a.coverage <= 1.0);
        CHECK(a.sized_breaches == sizes.size());
        if (!sizes.empty()) {
            double s = 0.0;
            for (double x : sizes) s += x;
            CHECK(a.size_of_loss_mean == Approx(s / sizes.size()));
            CHECK(a.size_of_loss_median == Approx(median(sizes)));
        }
        double lo = 1e300, hi = 0.0;
        for (double v : vars) {
            lo = std::min(lo, -v);
            hi = std::max(hi, -v);
        }
        CHECK(a.peak_to_trough == Approx(hi / lo));
    }
}

TEST_CASE("procyclicality metrics") {
    SECTION("constant series") {
        const auto p = procyclicality_metrics(std::vector<double>(30, -3.0), {1, 5, 10, 20});
        CHECK(p.peak_to_trough == 1.0);
        for (double x : p.n_day_pct) CHECK(x == 0.0);
    }
    SECTION("doubling") {
        const auto p = procyclicality_metrics({-1.0, -2.0}, {1});
        CHECK(p.n_day_pct[0] == Approx(100.0));
        CHECK(p.peak_to_trough == Approx(2.0));
    }
    SECTION("hand example") {
        const std::vector<double> v{-4.0, -2.0, -3.0, -6.0, -5.0};
        const auto p = procyclicality_metrics(v, {1, 2});
        CHECK(p.peak_to_trough == Approx(3.0));
        CHECK(p.n_day_pct[0] == Approx(100.0));  // 6 / 3
        CHECK(p.n_day_pct[1] == Approx(200.0));  // 6 / 2
    }
    SECTION("errors") {
        CHECK_THROWS_AS(procyclicality_metrics({-1.0, 0.0, -2.0}, {1}), DomainError);
        CHECK_THROWS_AS(procyclicality_metrics({-1.0, -2.0}, {2}), InsufficientData);
        CHECK_THROWS_AS(procyclicality_metrics({-1.0, -2.0}, {0}), DomainError);
    }
    SECTION("invariant under positive scaling") {
        testing::Gen gen(5);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> v;
            for (int i = 0; i < 60; ++i) v.push_back(-gen.uniform(0.5, 4.0));
            const double c = gen.uniform(0.1, 10.0);
            auto w = v;
            for (auto& x : w) x *= c;
            const auto a = procyclicality_metrics(v, {1, 5, 10, 20});
            const auto b = procyclicality_metrics(w, {1, 5, 10, 20});
            CHECK(a.peak_to_trough == Approx(b.peak_to_trough));
            for (std::size_t i = 0; i < 4; ++i) CHECK(a.n_day_pct[i] == Approx(b.n_day_pct[i]).margin(1e-9));
        }
    }
}

TEST_CASE("total risk requirement") {
    CHECK(total_risk_requirement(10, 0, 2, 3, 0) == 7.0);
    CHECK(total_risk_requirement(1, 0, 5, 0, 0) == 5.0);
    CHECK(total_risk_requirement(1, 0, 0, 10, 0) == 0.0);

    testing::Gen gen(31);
    for (int trial = 0; trial < 500; ++trial) {
        const double im = gen.uniform(0, 10), add = gen.uniform(0, 5), som = gen.uniform(0, 10);
        const double nov = gen.uniform(-10, 10), up = gen.uniform(0, 5), d = gen.uniform(0, 3);
        const double base = total_risk_requirement(im, add, som, nov, up);
        CHECK(base >= 0.0);
        CHECK(total_risk_requirement(im + d, add, som, nov, up) >= base);
        CHECK(total_risk_requirement(im, add + d, som, nov, up) >= base);
        CHECK(total_risk_requirement(im, add, som + d, nov, up) >= base);
        CHECK(total_risk_requirement(im, add, som, nov, up + d) >= base);
        CHECK(total_risk_requirement(im, add, som, nov + d, up) <= base);
    }

    const std::vector<MarginLine> lines{{2.0, 5.0, true, true},
                                        {-1.0, 3.0, true, false},
                                        {4.0, 1.0, false, true},
                                        {1.0, 7.0, true, false}};
    CHECK(net_option_value(lines) == Approx(2 * 5 - 3 + 7));
    CHECK(unpaid_premium(lines) == Approx(-3 + 7));
}

TEST_CASE("Kupiec band matches the binomial tails") {
    for (std::size_t n : {50u, 250u, 365u, 1000u})
        for (double theta : {0.95, 0.99}) {
            const auto b = kupiec_band(n, theta, 0.99);
            const double p = 1.0 - theta, tail = 0.005;
            CHECK(binom_cdf(n, p, static_cast<long>(b.min_breaches) - 1) <= tail);
            CHECK(binom_cdf(n, p, static_cast<long>(b.min_breaches)) > tail);
            CHECK(1.0 - binom_cdf(n, p, static_cast<long>(b.max_breaches)) <= tail + 1e-12);
            CHECK(1.0 - binom_cdf(n, p, static_cast<long>(b.max_breaches) - 1) > tail);
            CHECK(b.coverage_low == Approx(1.0 - double(b.max_breaches) / n));
            CHECK(b.coverage_high == Approx(1.0 - double(b.min_breaches) / n));
        }
    CHECK_THROWS_AS(kupiec_band(0, 0.99), InsufficientData);
    CHECK_THROWS_AS(kupiec_band(10, 1.0), DomainError);
}

TEST_CASE("a correct Gaussian VaR lands in the Kupiec band") {
    const std::size_t n = 500;
    const double var = testing::inv_Phi(0.01);
    const auto band = kupiec_band(n, 0.99);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        std::vector<DayRow> rows;
        for (std::size_t i = 0; i < n; ++i) rows.push_back(make_row(i, kStart, var, rng.normal(), 1.0));
        const auto a = aggregate(rows);
        CHECK(a.breaches >= band.min_breaches);
        CHECK(a.breaches <= band.max_breaches);
    }
}

TEST_CASE("Heston market grid reprices the model at the nodes") {
    const auto mk = small_market(3, 4);
    const auto& g = mk.grid(2);
    const auto& lat = mk.lattice();
    const auto p = heston::HestonParams::reference();
    for (std::size_t j : {0u, 3u, 7u})
        for (std::size_t m : {0u, 8u, 16u}) {
            const double tau = lat.taus[j], k = lat.ks[j][m];
            const double model = heston::heston_call_price(p, mk.spot(2), mk.variance(2), mk.spot(2) * std::exp(k), tau);
            const double bs_price = mk.spot(2) * bs::normalized_call(k, g.vols()[j][m] * std::sqrt(tau));
            CHECK(bs_price == Approx(model).epsilon(1e-8).margin(1e-9 * mk.spot(2)));
        }
    CHECK(mk.atm_vol(2, 0.25) == Approx(g.iv(0.25, 0.0)).epsilon(1e-3));
    CHECK(mk.date(2) == parse_date("2024-01-04"));
}

TEST_CASE("SV backtest of an outright stays in the Kupiec band") {
    const auto mk = small_market(121, 8);
    const auto specs = make_portfolios();
    BacktestConfig cfg;
    cfg.method = Method::sv;
    cfg.test_days = 120;
    const std::vector<PortfolioSpec> one{spec_by_id(specs, "out_atm_t90")};
    const auto res = run_backtest(mk, one, cfg);
    REQUIRE(res.size() == 1);
    const auto& r = res[0][0];
    CHECK(r.rows.size() == 120);
    const auto band = kupiec_band(r.agg.tested, 0.99);
    CHECK(r.agg.tested == 120);
    CHECK(r.agg.breaches <= band.max_breaches);
    for (const auto& row : r.rows) {
        CHECK(row.var < 0.0);
        CHECK(row.breach == (row.pnl < row.var));
    }
}

TEST_CASE("surface backtests are deterministic across worker counts") {
    const auto mk = small_market(40, 12);
    const auto all = make_portfolios();
    const std::vector<PortfolioSpec> specs{spec_by_id(all, "out_d0.35_t90"), spec_by_id(all, "cal_atm_t30_t90"),
                                           spec_by_id(all, "bfly_d0.20_t30")};
    BacktestConfig cfg;
    cfg.first_day = 20;
    cfg.test_days = 17;
    cfg.mpor_days = {1, 3};
    cfg.z_draws = 20000;
    const auto saved = default_workers();
    for (Method m : {Method::shortterm, Method::shortterm_t, Method::fhs}) {
        cfg.method = m;
        set_default_workers(1);
        const auto a = run_backtest(mk, specs, cfg);
        set_default_workers(4);
        const auto b = run_backtest(mk, specs, cfg);
        std::ostringstream sa, sb;
        for (const auto& per : a) write_report_csv(sa, per);
        for (const auto& per : b) write_report_csv(sb, per);
        CHECK(sa.str() == sb.str());
        REQUIRE(a.size() == 2);
        CHECK(a[1][0].mpor_days == 3);
        CHECK(a[0][0].agg.tested == 17);
        for (const auto& row : a[0][1].rows) CHECK(row.error.empty());
    }
    set_default_workers(saved);
}

TEST_CASE("a surfaces file replays the same backtest") {
    const auto mk = small_market(30, 5);
    std::stringstream file;
    write_surfaces_csv(file, mk, 0, mk.days());
    const auto replay = read_surfaces_csv(file);
    REQUIRE(replay.days() == mk.days());
    CHECK(replay.date(30) == mk.date(30));
    CHECK(replay.lattice().node_count() == mk.lattice().node_count());

    const std::vector<PortfolioSpec> specs{spec_by_id(make_portfolios(), "cal_atm_t30_t90")};
    BacktestConfig cfg;
    cfg.method = Method::shortterm;
    cfg.first_day = 20;
    cfg.test_days = 8;
    cfg.z_draws = 20000;
    const auto a = run_backtest(mk, specs, cfg);
    const auto b = run_backtest(replay, specs, cfg);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(b[0][0].rows[i].var == Approx(a[0][0].rows[i].var).epsilon(1e-12));
        CHECK(b[0][0].rows[i].pnl == Approx(a[0][0].rows[i].pnl).epsilon(1e-12).margin(1e-12));
    }

    cfg.method = Method::sv;
    CHECK_THROWS_AS(run_backtest(replay, specs, cfg), ConfigError);
}

TEST_CASE("a surfaces file with gaps and foreign lattices") {
    const auto mk = small_market(4, 6);
    std::stringstream full;
    write_surfaces_csv(full, mk, 0, 4);
    std::string text = full.str(), gap;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);)
        if (line.rfind("2024-01-03", 0) != 0) gap += line + "\n";
    std::istringstream in(gap);
    const auto g = read_surfaces_csv(in);
    REQUIRE(g.days() == 4);
    CHECK_FALSE(g.available(1));
    CHECK(g.available(2));

    const std::string last_line = text.substr(text.rfind('\n', text.size() - 2) + 1);
    const auto cut = last_line.find(',', last_line.find(',') + 1);
    std::istringstream extra(text + last_line.substr(0, cut) + ",999,0,0.2\n");
    CHECK_THROWS_AS(read_surfaces_csv(extra), ConfigError);
}

TEST_CASE("node vol-of-vol source uses each node's own EWMA") {
    const auto mk = small_market(30, 9);
    ShortTermSettings st;
    st.zeta = ZetaSource::node_ewma;
    const auto in = shortterm_inputs(mk, 25, 20, st);
    const auto& lat = mk.lattice();
    REQUIRE(in.node_volofvol.size() == 25);
    const auto p = in.params(lat, 22, 0.99, 5.0, 1.0 / 365.0);
    CHECK(p.beta == in.beta[21]);
    for (std::size_t j = 0; j < lat.taus.size(); j += 3)
        for (std::size_t m = 0; m < lat.ks[j].size(); m += 4)
            CHECK(p.zeta_of(lat.ks[j][m], lat.taus[j]) ==
                  Approx(in.node_volofvol[21][lat.flat(j, m)]).epsilon(1e-12));

    st.zeta = ZetaSource::factor;
    const auto f = shortterm_inputs(mk, 25, 20, st).params(lat, 22, 0.99, 5.0, 1.0 / 365.0);
    CHECK(f.zeta_of(lat.ks[3][5], lat.taus[3]) == Approx(in.atm_volofvol[21] * in.factors[3][5]));
    CHECK_THROWS_AS(in.params(lat, 0, 0.99, 5.0, 1.0), DomainError);
    CHECK_THROWS_AS(shortterm_inputs(mk, mk.days(), 20, st), InsufficientData);
}

TEST_CASE("t VaR is wider than the Gaussian one on the same inputs") {
    const auto mk = small_market(30, 3);
    const std::vector<PortfolioSpec> specs{spec_by_id(make_portfolios(), "out_atm_t30")};
    BacktestConfig cfg;
    cfg.first_day = 20;
    cfg.test_days = 8;
    cfg.z_draws = 20000;
    cfg.method = Method::shortterm;
    const auto g = run_backtest(mk, specs, cfg);
    cfg.method = Method::shortterm_t;
    const auto t = run_backtest(mk, specs, cfg);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(t[0][0].rows[i].var < g[0][0].rows[i].var);
        CHECK(t[0][0].rows[i].pnl == g[0][0].rows[i].pnl);
    }
}

TEST_CASE("missing days are skipped with a warning") {
    const auto p = heston::HestonParams::reference();
    auto path = heston::simulate_paths(p, 12, 2);
    path.spot[5] = std::nan("");
    const HestonMarket mk(p, path, market::Lattice::standard(), kStart);
    const std::vector<PortfolioSpec> specs{spec_by_id(make_portfolios(), "out_atm_t30")};
    BacktestConfig cfg;
    cfg.test_days = 10;
    const auto res = run_backtest(mk, specs, cfg);
    const auto& r = res[0][0];
    CHECK(r.rows.size() == 8);  // day 4 needs day 5 as well
    CHECK(r.agg.tested == 8);
    int skipped = 0;
    for (const auto& w : r.warnings) skipped += w.find("skipped") != std::string::npos;
    CHECK(skipped == 2);

    cfg.method = Method::shortterm;
    cfg.first_day = 2;
    cfg.test_days = 5;
    CHECK_THROWS_AS(run_backtest(mk, specs, cfg), InsufficientData);
}

TEST_CASE("a failing method excludes the day from coverage") {
    const auto p = heston::HestonParams::reference();
    auto path = heston::simulate_paths(p, 6, 2);
    path.variance[2] = 0.0;  // sv_var needs v > 0
    const HestonMarket mk(p, path);
    const std::vector<PortfolioSpec> specs{spec_by_id(make_portfolios(), "out_atm_t30")};
    BacktestConfig cfg;
    cfg.test_days = 5;
    const auto res = run_backtest(mk, specs, cfg);
    const auto& r = res[0][0];
    REQUIRE(r.rows.size() == 5);
    CHECK_FALSE(r.rows[2].error.empty());
    CHECK(r.agg.tested == 4);
    std::ostringstream out;
    write_report_csv(out, res[0]);
    std::size_t lines = 0;
    for (char c : out.str()) lines += c == '\n';
    CHECK(lines == 5);
}

TEST_CASE("backtest configuration errors") {
    const auto mk = small_market(5, 1);
    const auto specs = make_portfolios();
    BacktestConfig cfg;
    cfg.test_days = 3;
    auto bad = cfg;
    bad.theta = 1.0;
    CHECK_THROWS_AS(run_backtest(mk, specs, bad), ConfigError);
    bad = cfg;
    bad.mpor_days = {0};
    CHECK_THROWS_AS(run_backtest(mk, specs, bad), ConfigError);
    bad = cfg;
    bad.test_days = 10;
    CHECK_THROWS_AS(run_backtest(mk, specs, bad), InsufficientData);
    CHECK_THROWS_AS(method_from_string("var"), ConfigError);
    CHECK(method_from_string("shortterm-t") == Method::shortterm_t);
}

TEST_CASE("summary and table files") {
    BacktestReport r;
    r.spec_id = "x";
    r.rows = rows_from({-1.0, -1.0, -1.0, -1.0, -1.0, -1.0}, {0.0, -2.0, 0.5, 0.1, 0.2, 0.3},
                       {4.0, 4.0, 4.0, 4.0, 4.0, 4.0});
    r.agg = aggregate(r.rows);
    BacktestReport s = r;
    s.spec_id = "y";
    s.rows = rows_from({-1.0, -1.0, -1.0, -1.0, -1.0, -1.0}, {0.0, 0.0, 0.5, 0.1, 0.2, 0.3},
                       {4.0, 4.0, 4.0, 4.0, 4.0, 4.0});
    s.agg = aggregate(s.rows);
    const auto t = summarize({r, s});
    CHECK(t.portfolios == 2);
    CHECK(t.coverage_mean == Approx((5.0 / 6.0 + 1.0) / 2.0));
    CHECK(t.with_breaches == 1);
    CHECK(t.size_of_loss_mean == Approx(0.25));

    std::ostringstream rep, sum, tab;
    write_report_csv(rep, {r});
    write_summary_csv(sum, {r, s});
    write_table_csv(tab, {t});
    CHECK(rep.str().rfind("spec_id,date,var,pnl,breach,breach_size\nx,2024-01-02,-1,0,0,nan\nx,2024-01-03,-1,-2,1,0.25\n", 0) == 0);
    CHECK(sum.str().rfind("spec_id,method,mpor_days,theta,tested,breaches,coverage,", 0) == 0);
    CHECK(tab.str() == "method,mpor_days,portfolios,coverage_mean,coverage_median,with_breaches,"
                       "size_of_loss_mean,size_of_loss_median\nsv,1,2,0.9166666666666667,0.9166666666666667,1,0.25,0.25\n");
}
