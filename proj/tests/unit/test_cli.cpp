#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "imargin/backtest.hpp"
#include "imargin/csv.hpp"
#include "imargin/shortterm.hpp"
#include "support.hpp"

using namespace imargin;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(IMARGIN_FIXTURE_DIR) / "cli";

struct Result {
    int code;
    std::string out, err;
};

Result call(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("imargin_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string fixture(const std::string& name) { return (kFixtures / name).string(); }

// Every file of two output directories, byte for byte.
void check_same_dirs(const fs::path& a, const fs::path& b) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++n;
        INFO(e.path().filename());
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    }
    CHECK(n > 0);
    CHECK(n == static_cast<std::size_t>(std::distance(fs::directory_iterator(b), fs::directory_iterator{})));
}

}  // namespace

TEST_CASE("var --method shortterm on the fixture prints the golden VaR") {
    const std::string golden = slurp(kFixtures / "var_shortterm.golden");

    // Library assembly of the same number: last day of the file, factors
    // from the whole history, Gaussian quantile by bisection.
    std::ifstream in(fixture("surfaces.csv"));
    const auto src = backtest::read_surfaces_csv(in);
    const std::size_t last = src.days() - 1;
    const auto inputs = backtest::shortterm_inputs(src, last, last);
    const double h = 1.0 / 365.0;
    const auto p = inputs.params(src.lattice(), last, 0.99, 5.0, h);
    Portfolio pf{{Instrument::call, 1.0, 2054.0, 0.25, ""},
                 {Instrument::call, -1.0, 2054.0, 0.0833, ""},
                 {Instrument::put, -2.0, 1950.0, 0.5, ""},
                 {Instrument::spot, 0.5, 0.0, 0.0, ""}};
    const auto c = shortterm::exposure_coeffs(pf, src.spot(last), src.grid(last), p);
    const double oracle = testing::inv_Phi(0.01) * std::sqrt(c.c * c.c + c.q * c.q + 2.0 * p.rho * c.c * c.q) *
                          std::sqrt(h);
    CHECK(oracle == Catch::Approx(csv::parse_double(golden.substr(0, golden.size() - 1))).epsilon(1e-9));

    const auto dir = scratch("golden");
    const auto r = call({"var", "--method", "shortterm", "--surfaces", fixture("surfaces.csv"), "--portfolio",
                         fixture("portfolio.csv"), "--out", dir.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out == golden);
    CHECK(slurp(dir / "var.csv").find(golden.substr(0, golden.size() - 1)) != std::string::npos);
    const auto manifest = slurp(dir / "var.csv.manifest");
    CHECK(manifest.find("command=var\n") != std::string::npos);
    CHECK(manifest.find("theta=0.99\n") != std::string::npos);
    CHECK(manifest.find("seed=20240521\n") != std::string::npos);
}

TEST_CASE("simulate-heston is byte-identical across runs and worker counts") {
    const auto a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
    const std::vector<std::string> base{"simulate-heston", "--days", "365", "--seed", "7"};
    auto args = base;
    args.insert(args.end(), {"--out", a.string()});
    REQUIRE(call(args).code == 0);
    args = base;
    args.insert(args.end(), {"--out", b.string()});
    REQUIRE(call(args).code == 0);
    check_same_dirs(a, b);

    REQUIRE(call({"simulate-heston", "--days", "6", "--seed", "3", "--surfaces", "--workers", "1", "--out",
                  a.string()})
                .code == 0);
    REQUIRE(call({"--workers", "3", "simulate-heston", "--days", "6", "--seed", "3", "--surfaces", "--out",
                  c.string()})
                .code == 0);
    CHECK(slurp(a / "surfaces.csv") == slurp(c / "surfaces.csv"));
    CHECK(slurp(a / "surfaces.csv.manifest") == slurp(c / "surfaces.csv.manifest"));
}

TEST_CASE("backtest artifacts do not depend on the worker count") {
    const auto a = scratch("bt_a"), b = scratch("bt_b");
    const std::vector<std::string> base{"backtest",      "--method", "shortterm-t", "--surfaces",
                                        fixture("surfaces.csv"), "--first-day", "20", "--test-days",
                                        "8",             "--mpor",   "1,2",         "--z-draws",
                                        "20000",         "--spec",   "out_atm_t30,cal_atm_t30_t90,bfly_d0.20_t30"};
    auto args = base;
    args.insert(args.end(), {"--workers", "1", "--out", a.string()});
    REQUIRE(call(args).code == 0);
    args = base;
    args.insert(args.end(), {"--workers", "4", "--out", b.string()});
    REQUIRE(call(args).code == 0);
    check_same_dirs(a, b);

    // report recomputes the summary rows from the day rows
    const auto r = scratch("bt_report");
    REQUIRE(call({"report", "--report", (a / "report_2d.csv").string(), "--method", "shortterm-t", "--mpor-days", "2",
                  "--out", r.string()})
                .code == 0);
    std::istringstream full(slurp(a / "summary.csv")), redo(slurp(r / "summary.csv"));
    std::string line, expected;
    std::getline(full, line);
    expected = line + "\n";
    while (std::getline(full, line))
        if (line.find(",shortterm-t,2,") != std::string::npos) expected += line + "\n";
    CHECK(redo.str() == expected);
}

TEST_CASE("exit codes") {
    const auto dir = scratch("codes");
    const std::string out = "--out=" + dir.string();
    CHECK(call({"--help"}).code == 0);
    CHECK(call({}).code == 2);
    CHECK(call({"price"}).code == 2);
    CHECK(call({"simulate-heston", "--no-such-flag", out}).code == 2);
    CHECK(call({"var", "--surfaces", fixture("surfaces.csv"), out}).code == 2);
    CHECK(call({"var", "--method", "garch", out}).code == 2);
    CHECK(call({"var", "--method", "shortterm", "--surfaces", "/nonexistent.csv", "--spec", "out_atm_t30", out})
              .code == 2);
    CHECK(call({"var", "--method", "shortterm", "--surfaces", fixture("surfaces.csv"), out}).code == 2);
    CHECK(call({"simulate-heston", "--kappa", "-1", out}).code == 2);
    CHECK(call({"backtest", "--method", "sv", "--surfaces", fixture("surfaces.csv"), "--test-days", "3", out}).code ==
          2);

    // A frozen market: the spot / vol correlation has no variance to work with.
    fs::create_directories(dir);
    std::ostringstream frozen;
    frozen << "date,spot,tau_days,k,sigma\n";
    for (const char* d : {"2024-01-02", "2024-01-03", "2024-01-04", "2024-01-05"})
        for (double tau : {21.0, 63.0})
            for (double k : {-0.1, 0.0, 0.1}) frozen << d << ",100," << tau << ',' << k << ",0.2\n";
    std::ofstream(dir / "frozen.csv") << frozen.str();
    const auto r = call({"var", "--method", "shortterm", "--surfaces", (dir / "frozen.csv").string(), "--portfolio",
                         fixture("portfolio.csv"), out});
    CHECK(r.code == 3);
    CHECK(r.err.find("numerical error") != std::string::npos);
}

TEST_CASE("config file values yield to command-line flags") {
    const auto dir = scratch("config");
    fs::create_directories(dir);
    std::ofstream(dir / "run.cfg") << "# var settings\nmethod = shortterm\ntheta=0.95\n\nportfolio="
                                   << fixture("portfolio.csv") << "\nsurfaces=" << fixture("surfaces.csv") << '\n';
    const auto r = call({"--config", (dir / "run.cfg").string(), "var", "--theta", "0.99", "--out", dir.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out == slurp(kFixtures / "var_shortterm.golden"));
    const auto manifest = slurp(dir / "var.csv.manifest");
    CHECK(manifest.find("theta=0.99\n") != std::string::npos);
    CHECK(manifest.find("method=shortterm\n") != std::string::npos);

    std::ofstream(dir / "bad.cfg") << "methd=shortterm\n";
    CHECK(call({"var", "--config", (dir / "bad.cfg").string(), "--method", "shortterm"}).code == 2);
    std::ofstream(dir / "broken.cfg") << "just words\n";
    CHECK(call({"var", "--config", (dir / "broken.cfg").string()}).code == 2);
}

TEST_CASE("the output directory defaults to IMARGIN_OUT_DIR") {
    const auto dir = scratch("env");
    ::setenv("IMARGIN_OUT_DIR", dir.string().c_str(), 1);
    const auto r = call({"simulate-heston", "--days", "3"});
    ::unsetenv("IMARGIN_OUT_DIR");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "history.csv"));
    CHECK(fs::exists(dir / "history.csv.manifest"));
}
