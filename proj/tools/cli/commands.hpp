#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "imargin/heston.hpp"

namespace imargin::cli {

struct Context {
    std::filesystem::path out_dir;
    std::string command;
    std::map<std::string, std::string> settings;  // resolved options, echoed in manifests
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;

    // Writes `name` and `name.manifest` under out_dir.
    void write_artifact(const std::string& name, const std::string& content) const;
};

struct SimulateOptions {
    heston::HestonParams params = heston::HestonParams::reference();
    std::size_t days = 365;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    std::string scheme = "arithmetic";
    std::string start = "2016-01-04";
    bool surfaces = false;
};

struct BuildGridOptions {
    heston::HestonParams params = heston::HestonParams::reference();
    std::string chain;
    double spot = 0.0;
    std::string history;
};

struct CalibrateOptions {
    std::string surfaces;
    std::size_t d = 2;
    std::string extension = "regression";
    bool no_repair = false;
    double lambda = 0.97;
};

struct VarOptions {
    heston::HestonParams params = heston::HestonParams::reference();
    std::string method;
    double theta = 0.99;
    int mpor_days = 1;
    std::string portfolio;
    std::string spec;
    std::string surfaces;
    std::string history;
    std::string model;
    std::string law = "lognormal";
    double nu = 5.0;
    double lambda = 0.97;
    std::size_t n_sims = 100000;
    std::size_t z_draws = 200000;
    std::uint64_t seed = 20240521;
    std::size_t fhs_window = 0;
    std::string zeta = "factor";
};

struct BacktestOptions {
    heston::HestonParams params = heston::HestonParams::reference();
    std::string method = "sv";
    double theta = 0.99;
    std::vector<int> mpor{1};
    std::string surfaces;
    std::string history;
    std::uint64_t seed = 1;
    std::size_t days = 0;
    std::string start = "2016-01-04";
    long first_day = -1;
    std::size_t test_days = 365;
    std::string portfolios = "standard";
    std::vector<std::string> specs;
    double lambda = 0.97;
    double nu = 5.0;
    std::size_t z_draws = 200000;
    std::uint64_t z_seed = 20240521;
    std::size_t fhs_window = 0;
    std::string zeta = "factor";
};

struct ReportOptions {
    std::string report;
    std::string method;
    int mpor_days = 1;
    double theta = 0.99;
};

void simulate_heston(Context& ctx, const SimulateOptions& o);
void build_grid(Context& ctx, const BuildGridOptions& o);
void calibrate_affine(Context& ctx, const CalibrateOptions& o);
void compute_var(Context& ctx, const VarOptions& o);
void backtest(Context& ctx, const BacktestOptions& o);
void report(Context& ctx, const ReportOptions& o);

}  // namespace imargin::cli
