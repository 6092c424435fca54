#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "imargin/affine.hpp"
#include "imargin/backtest.hpp"
#include "imargin/blackscholes.hpp"
#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/fhs.hpp"
#include "imargin/shortterm.hpp"
#include "imargin/valuation.hpp"

namespace imargin::cli {

namespace {

constexpr double kDay = backtest::MarketSource::day_length;

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return in;
}

struct History {
    heston::HestonPath path;
    Date start{};
};

History read_history(const std::string& file) {
    History h;
    auto in = open_in(file);
    h.path = heston::read_history_csv(in);
    const auto table = csv::read_file(file);
    h.start = parse_date(table.rows.front()[table.column("date")]);
    return h;
}

backtest::GridHistory read_surfaces(const std::string& file) {
    auto in = open_in(file);
    return backtest::read_surfaces_csv(in);
}

Instrument parse_kind(const std::string& s) {
    if (s == "call") return Instrument::call;
    if (s == "put") return Instrument::put;
    if (s == "spot") return Instrument::spot;
    if (s == "cash") return Instrument::cash;
    throw ConfigError("portfolio: unknown kind '" + s + "'");
}

// `kind,quantity,strike,tau` with tau in years; strike and tau are ignored
// for spot and cash lines.
Portfolio read_portfolio(const std::string& file) {
    const auto table = csv::read_file(file);
    const auto c_kind = table.column("kind"), c_q = table.column("quantity"), c_k = table.column("strike"),
               c_tau = table.column("tau");
    Portfolio pf;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        Position p;
        p.kind = parse_kind(row[c_kind]);
        p.quantity = csv::to_double(row[c_q], r, "quantity");
        if (is_option(p.kind)) {
            p.strike = csv::to_double(row[c_k], r, "strike");
            p.tau = csv::to_double(row[c_tau], r, "tau");
            if (!(p.strike > 0.0) || !(p.tau > 0.0))
                throw ConfigError("portfolio: row " + std::to_string(r + 1) + " needs a positive strike and tau");
        }
        pf.push_back(p);
    }
    if (pf.empty()) throw ConfigError("portfolio: no positions in " + file);
    return pf;
}

std::vector<backtest::PortfolioSpec> every_spec() {
    auto specs = backtest::make_portfolios();
    for (auto& s : backtest::procyclicality_portfolios()) specs.push_back(std::move(s));
    return specs;
}

const backtest::PortfolioSpec& find_spec(const std::vector<backtest::PortfolioSpec>& specs, const std::string& id) {
    for (const auto& s : specs)
        if (s.id == id) return s;
    throw ConfigError("unknown portfolio id '" + id + "'");
}

Portfolio portfolio_for(const VarOptions& o, double spot, const std::function<double(double)>& atm_vol) {
    if (!o.portfolio.empty()) return read_portfolio(o.portfolio);
    if (o.spec.empty()) throw ConfigError("var needs --portfolio or --spec");
    const auto specs = every_spec();
    return backtest::resolve(find_spec(specs, o.spec), spot, atm_vol);
}

affine::SpotLaw parse_law(const std::string& s) {
    if (s == "normal") return affine::SpotLaw::normal;
    if (s == "tstudent") return affine::SpotLaw::tstudent;
    return affine::SpotLaw::lognormal;
}

backtest::ZetaSource parse_zeta(const std::string& s) {
    return s == "node-ewma" ? backtest::ZetaSource::node_ewma : backtest::ZetaSource::factor;
}

void require_full(const backtest::MarketSource& src, std::size_t last) {
    for (std::size_t t = 0; t <= last; ++t)
        if (!src.available(t))
            throw InsufficientData("day " + std::to_string(t) + " (" + format_date(src.date(t)) +
                                   ") is missing from the surfaces file");
}

void warn(const Context& ctx, const std::vector<std::string>& warnings) {
    for (const auto& w : std::set<std::string>(warnings.begin(), warnings.end())) *ctx.err << "warning: " << w << '\n';
}

}  // namespace

void simulate_heston(Context& ctx, const SimulateOptions& o) {
    const auto scheme = o.scheme == "log" ? heston::Scheme::log : heston::Scheme::arithmetic;
    const Date start = parse_date(o.start);
    auto path = heston::simulate_paths(o.params, o.days, o.seed, o.stream, scheme);
    if (path.truncated_steps > 0)
        *ctx.err << "warning: variance truncated at zero on " << path.truncated_steps << " of " << path.steps
                 << " steps\n";
    std::ostringstream hist;
    heston::write_history_csv(hist, path, start);
    ctx.write_artifact("history.csv", hist.str());
    *ctx.out << (ctx.out_dir / "history.csv").string() << '\n';
    if (o.surfaces) {
        const backtest::HestonMarket mk(o.params, std::move(path), market::Lattice::standard(), start);
        mk.prepare_grids(0, mk.days());
        std::ostringstream surf;
        backtest::write_surfaces_csv(surf, mk, 0, mk.days());
        ctx.write_artifact("surfaces.csv", surf.str());
        *ctx.out << (ctx.out_dir / "surfaces.csv").string() << '\n';
    }
}

void build_grid(Context& ctx, const BuildGridOptions& o) {
    if (!o.chain.empty()) {
        if (!(o.spot > 0.0)) throw ConfigError("build-grid: --spot must be positive");
        const auto quotes = market::read_chain_csv(o.chain);
        const auto fit = market::fit_term_structure(quotes, o.spot);
        for (Date d : fit.skipped)
            *ctx.err << "warning: expiry " << format_date(d) << " has fewer than two put/call pairs\n";
        const auto clean = market::sanitize_chain(quotes, fit.term);
        for (const auto& d : clean.dropped) *ctx.err << "dropped quote " << d.index << ": " << d.reason << '\n';
        const auto built = market::build_surface_grid(clean.calls, fit.term);
        warn(ctx, built.warnings);
        std::ostringstream s;
        market::write_grid_csv(s, built.grid);
        ctx.write_artifact("grid.csv", s.str());
        *ctx.out << (ctx.out_dir / "grid.csv").string() << '\n';
        return;
    }
    if (o.history.empty()) throw ConfigError("build-grid needs --chain or --history");
    auto h = read_history(o.history);
    const backtest::HestonMarket mk(o.params, std::move(h.path), market::Lattice::standard(), h.start);
    mk.prepare_grids(0, mk.days());
    std::ostringstream s;
    backtest::write_surfaces_csv(s, mk, 0, mk.days());
    ctx.write_artifact("surfaces.csv", s.str());
    *ctx.out << (ctx.out_dir / "surfaces.csv").string() << '\n';
}

void calibrate_affine(Context& ctx, const CalibrateOptions& o) {
    const auto src = read_surfaces(o.surfaces);
    const auto& lat = src.lattice();
    std::vector<std::size_t> days;
    for (std::size_t t = 0; t < src.days(); ++t)
        if (src.available(t)) days.push_back(t);
    if (days.size() < src.days())
        *ctx.err << "warning: " << src.days() - days.size()
                 << " missing days; increments across gaps are treated as daily\n";

    Eigen::MatrixXd prices(static_cast<Eigen::Index>(days.size()), static_cast<Eigen::Index>(lat.node_count()));
    std::vector<double> spots;
    for (std::size_t i = 0; i < days.size(); ++i) {
        const auto c = src.grid(days[i]).normalized_prices();
        for (std::size_t j = 0; j < lat.taus.size(); ++j)
            for (std::size_t m = 0; m < lat.ks[j].size(); ++m)
                prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(lat.flat(j, m))) = c[j][m];
        spots.push_back(src.spot(days[i]));
    }
    const auto ext = o.extension == "interpolate" ? affine::Extension::interpolate : affine::Extension::regression;
    auto cal = affine::calibrate_factors(lat, prices, o.d, ext, !o.no_repair);
    warn(ctx, cal.warnings);
    affine::DynamicsOptions dopt;
    dopt.lambda = o.lambda;
    auto est = affine::estimate_dynamics(spots, cal.xi_history, kDay, dopt);
    warn(ctx, est.warnings);

    affine::AffineModel model;
    model.surfaces = cal.surfaces;
    model.term = src.grid(days.back()).term();
    model.xi = cal.xi_history.row(cal.xi_history.rows() - 1).transpose();
    model.dyn = est.dyn;
    model.corr = est.corr;
    model.validate();
    std::ostringstream s;
    affine::write_model(s, model);
    ctx.write_artifact("model.txt", s.str());
    *ctx.out << "mape " << csv::format_double(cal.mape) << ", repaired constraints " << cal.repaired_constraints
             << '\n'
             << (ctx.out_dir / "model.txt").string() << '\n';
}

void compute_var(Context& ctx, const VarOptions& o) {
    if (!(o.theta > 0.0 && o.theta < 1.0)) throw ConfigError("var: theta must lie in (0,1)");
    if (o.mpor_days <= 0) throw ConfigError("var: --mpor-days must be positive");
    const double h = o.mpor_days * kDay;
    double var = 0.0, std_error = std::numeric_limits<double>::quiet_NaN();
    std::vector<std::string> warnings;

    if (o.method == "shortterm" || o.method == "shortterm-t" || o.method == "fhs") {
        if (o.surfaces.empty()) throw ConfigError("var --method " + o.method + " needs --surfaces");
        const auto src = read_surfaces(o.surfaces);
        if (src.days() < 3) throw InsufficientData("var: the surfaces file needs at least three days");
        const std::size_t last = src.days() - 1;
        require_full(src, last);
        const auto& grid = src.grid(last);
        const double s = src.spot(last);
        const auto pf = portfolio_for(o, s, [&](double tau) { return grid.iv(tau, 0.0); });
        backtest::ShortTermSettings st;
        st.lambda = o.lambda;
        st.zeta = parse_zeta(o.zeta);
        if (o.method == "fhs") {
            est::EwmaConfig ew;
            ew.lambda = o.lambda;
            ew.step = kDay;
            std::vector<double> spots(last + 1);
            std::vector<std::vector<double>> vols(last + 1);
            for (std::size_t t = 0; t <= last; ++t) {
                spots[t] = src.spot(t);
                vols[t] = src.grid(t).flat_vols();
            }
            const auto panel = fhs::panel_from_history(spots, vols, ew);
            fhs::FhsOptions fo;
            fo.n_back = o.fhs_window;
            const auto res = fhs::fhs_var(pf, grid, panel, o.theta, h, fo);
            if (res.floored_values > 0)
                warnings.push_back(std::to_string(res.floored_values) + " shocked vols lifted to the floor");
            var = res.var;
        } else {
            const auto in = backtest::shortterm_inputs(src, last, last, st);
            warnings = in.warnings;
            const auto p = in.params(src.lattice(), last, o.theta, o.nu, h);
            const auto coeffs = shortterm::exposure_coeffs(pf, s, grid, p);
            var = o.method == "shortterm" ? shortterm::gaussian_var(coeffs, p)
                                          : shortterm::tstudent_var(coeffs, p, o.z_draws, o.seed);
        }
    } else if (o.method == "sv") {
        if (o.history.empty()) throw ConfigError("var --method sv needs --history");
        auto hist = read_history(o.history);
        const backtest::HestonMarket mk(o.params, std::move(hist.path), market::Lattice::standard(), hist.start);
        const std::size_t last = mk.days() - 1;
        if (!mk.available(last)) throw DomainError("var: the last day of the history is not a valid state");
        const double s = mk.spot(last), v = mk.variance(last);
        const auto pf = portfolio_for(o, s, [&](double tau) { return mk.atm_vol(last, tau); });
        const backtest::BacktestConfig defaults;
        const heston::StatePricer pricer = [&](const Portfolio& p, double ss, double vv) {
            return heston::portfolio_value(o.params, p, ss, vv);
        };
        const auto sens = heston::fd_portfolio_sensitivities(pricer, pf, s, v, defaults.eps_spot * s,
                                                             defaults.eps_variance * v);
        warnings = sens.warnings;
        var = heston::sv_var(sens, s, v, o.params, o.theta, h);
    } else {
        if (o.model.empty()) throw ConfigError("var --method " + o.method + " needs --model");
        auto in = open_in(o.model);
        const auto model = affine::read_model(in);
        const auto pf = portfolio_for(o, model.spot(), [&](double tau) {
            return bs::implied_vol_normalized(affine::price_surface(model, model.xi, tau, 0.0), 0.0, tau);
        });
        const auto law = parse_law(o.law);
        if (o.method == "affine-closed") {
            affine::ClosedOptions co;
            co.law = law;
            co.nu = o.nu;
            co.n_draws = o.z_draws;
            co.seed = o.seed;
            var = affine::closed_var(model, pf, o.theta, h, co);
        } else if (o.method == "affine-quasi") {
            if (law == affine::SpotLaw::tstudent) throw ConfigError("affine-quasi supports the lognormal and normal laws");
            affine::QuasiOptions qo;
            qo.law = law;
            const auto res = affine::quasi_explicit_var(model, pf, o.theta, h, qo);
            if (res.adaptive) warnings.push_back("quadrature fell back to adaptive integration");
            var = res.var;
        } else {
            affine::EmpiricalOptions eo;
            eo.n_sims = o.n_sims;
            eo.seed = o.seed;
            eo.law = law;
            eo.nu = o.nu;
            const auto res = affine::empirical_var(model, pf, o.theta, h, eo);
            if (res.bound_breaks > 0)
                warnings.push_back(std::to_string(res.bound_breaks) + " simulated prices outside their bounds");
            var = res.var;
            std_error = res.std_error;
        }
    }
    warn(ctx, warnings);
    std::ostringstream s;
    s << "method,theta,mpor_days,var,std_error\n"
      << o.method << ',' << csv::format_double(o.theta) << ',' << o.mpor_days << ',' << csv::format_double(var)
      << ',' << csv::format_double(std_error) << '\n';
    ctx.write_artifact("var.csv", s.str());
    *ctx.out << csv::format_double(var) << '\n';
}

void backtest(Context& ctx, const BacktestOptions& o) {
    backtest::BacktestConfig cfg;
    cfg.method = backtest::method_from_string(o.method);
    cfg.theta = o.theta;
    cfg.mpor_days = o.mpor;
    if (o.first_day < -1) throw ConfigError("backtest: --first-day must not be negative");
    cfg.first_day = o.first_day >= 0 ? static_cast<std::size_t>(o.first_day)
                                     : (cfg.method == backtest::Method::sv ? 0 : 1825);
    cfg.test_days = o.test_days;
    cfg.shortterm.lambda = o.lambda;
    cfg.shortterm.zeta = parse_zeta(o.zeta);
    cfg.nu = o.nu;
    cfg.z_draws = o.z_draws;
    cfg.seed = o.z_seed;
    cfg.fhs_window = o.fhs_window;
    ctx.settings["first-day"] = std::to_string(cfg.first_day);

    auto all = o.portfolios == "procyclicality" ? backtest::procyclicality_portfolios() : backtest::make_portfolios();
    std::vector<backtest::PortfolioSpec> specs;
    if (o.specs.empty()) {
        specs = std::move(all);
    } else {
        for (const auto& id : o.specs) specs.push_back(find_spec(all, id));
    }

    std::unique_ptr<backtest::MarketSource> market;
    if (!o.surfaces.empty()) {
        market = std::make_unique<backtest::GridHistory>(read_surfaces(o.surfaces));
    } else if (!o.history.empty()) {
        auto h = read_history(o.history);
        market = std::make_unique<backtest::HestonMarket>(o.params, std::move(h.path), market::Lattice::standard(),
                                                          h.start);
    } else {
        int max_m = 0;
        for (int m : cfg.mpor_days) max_m = std::max(max_m, m);
        const std::size_t days = o.days > 0 ? o.days : cfg.first_day + cfg.test_days + static_cast<std::size_t>(max_m);
        ctx.settings["days"] = std::to_string(days);
        market = std::make_unique<backtest::HestonMarket>(o.params, heston::simulate_paths(o.params, days, o.seed),
                                                          market::Lattice::standard(), parse_date(o.start));
    }

    const auto res = backtest::run_backtest(*market, specs, cfg);
    std::vector<backtest::BacktestReport> flat;
    std::vector<backtest::TableRow> table;
    for (std::size_t m = 0; m < res.size(); ++m) {
        std::ostringstream rep;
        backtest::write_report_csv(rep, res[m]);
        ctx.write_artifact("report_" + std::to_string(cfg.mpor_days[m]) + "d.csv", rep.str());
        flat.insert(flat.end(), res[m].begin(), res[m].end());
        table.push_back(backtest::summarize(res[m]));
        if (!res[m].empty()) warn(ctx, res[m].front().warnings);
    }
    std::ostringstream sum, tab;
    backtest::write_summary_csv(sum, flat);
    backtest::write_table_csv(tab, table);
    ctx.write_artifact("summary.csv", sum.str());
    ctx.write_artifact("table.csv", tab.str());
    *ctx.out << tab.str();
}

void report(Context& ctx, const ReportOptions& o) {
    const auto method = backtest::method_from_string(o.method);
    const auto table = csv::read_file(o.report);
    const auto c_id = table.column("spec_id"), c_date = table.column("date"), c_var = table.column("var"),
               c_pnl = table.column("pnl"), c_breach = table.column("breach"), c_size = table.column("breach_size");
    std::vector<backtest::BacktestReport> reports;
    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto [it, fresh] = index.emplace(row[c_id], reports.size());
        if (fresh) {
            backtest::BacktestReport rep;
            rep.spec_id = row[c_id];
            rep.method = method;
            rep.mpor_days = o.mpor_days;
            rep.theta = o.theta;
            reports.push_back(std::move(rep));
        }
        backtest::DayRow d;
        d.day = reports[it->second].rows.size();
        d.date = parse_date(row[c_date]);
        d.var = csv::to_double(row[c_var], r, "var");
        d.pnl = csv::to_double(row[c_pnl], r, "pnl");
        d.breach = csv::to_long(row[c_breach], r, "breach") != 0;
        d.breach_size = csv::to_double(row[c_size], r, "breach_size");
        reports[it->second].rows.push_back(d);
    }
    if (reports.empty()) throw InsufficientData("report: no rows in " + o.report);
    for (auto& r : reports) r.agg = backtest::aggregate(r.rows);
    std::ostringstream sum, tab;
    backtest::write_summary_csv(sum, reports);
    backtest::write_table_csv(tab, {backtest::summarize(reports)});
    ctx.write_artifact("summary.csv", sum.str());
    ctx.write_artifact("table.csv", tab.str());
    *ctx.out << tab.str();
}

}  // namespace imargin::cli
