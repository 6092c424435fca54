#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <type_traits>

#include <CLI11.hpp>

#include "commands.hpp"
#include "imargin/csv.hpp"
#include "imargin/errors.hpp"
#include "imargin/parallel.hpp"

namespace imargin::cli {

namespace {

std::string text(double x) { return csv::format_double(x); }
std::string text(const std::string& x) { return x; }
std::string text(bool x) { return x ? "true" : "false"; }
template <class T>
    requires std::is_integral_v<T>
std::string text(T x) {
    return std::to_string(x);
}
template <class T>
std::string text(const std::vector<T>& xs) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : ",") + text(x);
    return s;
}

// Options bound to variables, remembered per subcommand so that manifests
// can echo the resolved values at full precision.
class Registry {
public:
    template <class T>
    CLI::Option* option(CLI::App* sub, const std::string& name, T& var, const std::string& help = "") {
        values_[sub].emplace_back(name.substr(2), [&var] { return text(var); });
        return sub->add_option(name, var, help);
    }
    CLI::Option* flag(CLI::App* sub, const std::string& name, bool& var, const std::string& help) {
        values_[sub].emplace_back(name.substr(2), [&var] { return text(var); });
        return sub->add_flag(name, var, help);
    }
    std::map<std::string, std::string> resolved(const CLI::App* sub) const {
        std::map<std::string, std::string> m;
        if (auto it = values_.find(sub); it != values_.end())
            for (const auto& [name, get] : it->second) m[name] = get();
        return m;
    }

private:
    std::map<const CLI::App*, std::vector<std::pair<std::string, std::function<std::string()>>>> values_;
};

void add_heston(Registry& reg, CLI::App* sub, heston::HestonParams& p) {
    reg.option(sub, "--kappa", p.kappa, "variance mean reversion");
    reg.option(sub, "--long-variance", p.theta, "long-run variance");
    reg.option(sub, "--xi", p.xi, "vol of variance");
    reg.option(sub, "--rho", p.rho, "spot/variance correlation");
    reg.option(sub, "--alpha", p.alpha, "spot drift");
    reg.option(sub, "--s0", p.s0, "initial spot");
    reg.option(sub, "--v0", p.v0, "initial variance");
    reg.option(sub, "--dt", p.dt, "Euler step in years");
}

bool has_flag(const std::vector<std::string>& args, const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
    });
}

// `key=value` lines; blank lines and lines starting with # are ignored.
// Keys already given on the command line keep the command-line value.
std::vector<std::string> merge_config(std::vector<std::string> args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::vector<std::string> extra;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(n) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty() || key == "config") throw ConfigError(path + ":" + std::to_string(n) + ": bad key");
        if (has_flag(args, key)) continue;
        extra.push_back("--" + key);
        extra.push_back(value);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

}  // namespace

void Context::write_artifact(const std::string& name, const std::string& content) const {
    std::filesystem::create_directories(out_dir);
    const auto path = out_dir / name;
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + path.string());
        f << content;
    }
    std::ofstream m(out_dir / (name + ".manifest"), std::ios::binary);
    if (!m) throw ConfigError("cannot write " + path.string() + ".manifest");
    m << "artifact=" << name << "\ncommand=" << command << '\n';
    for (const auto& [k, v] : settings) m << k << '=' << v << '\n';
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Initial margin engine"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default();
    Registry reg;

    std::string config, out_dir;
    std::size_t workers = 0;
    app.add_option("--config", config, "key=value file; command-line flags take precedence");
    app.add_option("--out", out_dir, "output directory (default $IMARGIN_OUT_DIR or .)");
    app.add_option("--workers", workers, "worker threads, 0 for the machine default");

    SimulateOptions sim;
    auto* s_sim = app.add_subcommand("simulate-heston", "simulate a Heston history");
    add_heston(reg, s_sim, sim.params);
    reg.option(s_sim, "--days", sim.days, "number of simulated days");
    reg.option(s_sim, "--seed", sim.seed);
    reg.option(s_sim, "--stream", sim.stream);
    reg.option(s_sim, "--scheme", sim.scheme)->check(CLI::IsMember({"arithmetic", "log"}));
    reg.option(s_sim, "--start", sim.start, "date of day 0");
    reg.flag(s_sim, "--surfaces", sim.surfaces, "also write the daily implied-vol lattices");

    BuildGridOptions grid;
    auto* s_grid = app.add_subcommand("build-grid", "implied-vol lattice from a chain or a Heston history");
    add_heston(reg, s_grid, grid.params);
    auto* o_chain = reg.option(s_grid, "--chain", grid.chain, "option chain CSV");
    reg.option(s_grid, "--spot", grid.spot, "spot of the chain date")->needs(o_chain);
    reg.option(s_grid, "--history", grid.history, "Heston history CSV")->excludes(o_chain);

    CalibrateOptions cal;
    auto* s_cal = app.add_subcommand("calibrate-affine", "fit the affine factor model to a surfaces file");
    reg.option(s_cal, "--surfaces", cal.surfaces)->required();
    reg.option(s_cal, "--d", cal.d, "number of factors");
    reg.option(s_cal, "--extension", cal.extension)->check(CLI::IsMember({"interpolate", "regression"}));
    reg.flag(s_cal, "--no-repair", cal.no_repair, "skip the arbitrage repair");
    reg.option(s_cal, "--lambda", cal.lambda, "EWMA decay of the spot vol");

    VarOptions var;
    auto* s_var = app.add_subcommand("var", "VaR of one portfolio on the last day of the data");
    add_heston(reg, s_var, var.params);
    reg.option(s_var, "--method", var.method)
        ->required()
        ->check(CLI::IsMember(
            {"shortterm", "shortterm-t", "fhs", "sv", "affine-closed", "affine-quasi", "affine-mc"}));
    reg.option(s_var, "--theta", var.theta);
    reg.option(s_var, "--mpor-days", var.mpor_days);
    auto* o_pf = reg.option(s_var, "--portfolio", var.portfolio, "CSV kind,quantity,strike,tau");
    reg.option(s_var, "--spec", var.spec, "standard portfolio id")->excludes(o_pf);
    reg.option(s_var, "--surfaces", var.surfaces);
    reg.option(s_var, "--history", var.history);
    reg.option(s_var, "--model", var.model);
    reg.option(s_var, "--law", var.law)->check(CLI::IsMember({"lognormal", "normal", "tstudent"}));
    reg.option(s_var, "--nu", var.nu);
    reg.option(s_var, "--lambda", var.lambda);
    reg.option(s_var, "--n-sims", var.n_sims);
    reg.option(s_var, "--z-draws", var.z_draws);
    reg.option(s_var, "--seed", var.seed);
    reg.option(s_var, "--fhs-window", var.fhs_window);
    reg.option(s_var, "--zeta", var.zeta)->check(CLI::IsMember({"factor", "node-ewma"}));

    BacktestOptions bt;
    auto* s_bt = app.add_subcommand("backtest", "daily VaR backtest over a portfolio set");
    add_heston(reg, s_bt, bt.params);
    reg.option(s_bt, "--method", bt.method)->check(CLI::IsMember({"sv", "shortterm", "shortterm-t", "fhs"}));
    reg.option(s_bt, "--theta", bt.theta);
    reg.option(s_bt, "--mpor", bt.mpor, "MPOR days, comma separated")->delimiter(',');
    auto* o_surf = reg.option(s_bt, "--surfaces", bt.surfaces);
    reg.option(s_bt, "--history", bt.history)->excludes(o_surf);
    reg.option(s_bt, "--seed", bt.seed, "seed of the simulated history");
    reg.option(s_bt, "--days", bt.days, "simulated days, 0 for just enough");
    reg.option(s_bt, "--start", bt.start);
    reg.option(s_bt, "--first-day", bt.first_day, "first test day; default 0 for sv, 1825 otherwise");
    reg.option(s_bt, "--test-days", bt.test_days);
    reg.option(s_bt, "--portfolios", bt.portfolios)->check(CLI::IsMember({"standard", "procyclicality"}));
    reg.option(s_bt, "--spec", bt.specs, "restrict to these portfolio ids")->delimiter(',');
    reg.option(s_bt, "--lambda", bt.lambda);
    reg.option(s_bt, "--nu", bt.nu);
    reg.option(s_bt, "--z-draws", bt.z_draws);
    reg.option(s_bt, "--z-seed", bt.z_seed);
    reg.option(s_bt, "--fhs-window", bt.fhs_window);
    reg.option(s_bt, "--zeta", bt.zeta)->check(CLI::IsMember({"factor", "node-ewma"}));

    ReportOptions rep;
    auto* s_rep = app.add_subcommand("report", "aggregates recomputed from a backtest report");
    reg.option(s_rep, "--report", rep.report)->required();
    reg.option(s_rep, "--method", rep.method)->required();
    reg.option(s_rep, "--mpor-days", rep.mpor_days);
    reg.option(s_rep, "--theta", rep.theta);

    const std::size_t saved_workers = default_workers();
    int code = 0;
    try {
        auto args = merge_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);

        if (workers > 0) set_default_workers(workers);
        Context ctx;
        if (out_dir.empty()) {
            const char* env = std::getenv("IMARGIN_OUT_DIR");
            out_dir = env && *env ? env : ".";
        }
        ctx.out_dir = out_dir;
        ctx.out = &out;
        ctx.err = &err;
        const CLI::App* sub = app.get_subcommands().front();
        ctx.command = sub->get_name();
        ctx.settings = reg.resolved(sub);

        if (sub == s_sim) simulate_heston(ctx, sim);
        else if (sub == s_grid) build_grid(ctx, grid);
        else if (sub == s_cal) calibrate_affine(ctx, cal);
        else if (sub == s_var) compute_var(ctx, var);
        else if (sub == s_bt) backtest(ctx, bt);
        else report(ctx, rep);
    } catch (const CLI::ParseError& e) {
        code = app.exit(e, out, err) == 0 ? 0 : 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        code = 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        code = 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        code = 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        code = 1;
    }
    set_default_workers(saved_workers);
    return code;
}

}  // namespace imargin::cli
