#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "imargin/dates.hpp"

namespace imargin::market {

struct OptionQuote {
    Date as_of{};
    Date expiry{};
    int omega = 1;
    double strike = 0.0;
    double mid = 0.0;
    double volume = 0.0;
};

// Reads `as_of,expiry,omega,strike,mid,volume`; omega may be 1/-1 or C/P.
std::vector<OptionQuote> read_chain_csv(const std::string& path);
std::vector<OptionQuote> read_chain_csv(std::istream& in);

struct Pillar {
    double tau;
    double discount;
    double forward;
};

// Discount factors and forwards by time to maturity. Between pillars
// log-DF and log(F/S) are linear in tau with an exact anchor at tau = 0;
// beyond the last pillar the last segment's rates are extended.
class TermStructure {
public:
    TermStructure() = default;
    explicit TermStructure(double spot, std::vector<Pillar> pillars = {});

    // Constant short rate r and carry-adjusted drift (forward = S e^{(r-q) tau}).
    static TermStructure flat(double spot, double rate = 0.0, double dividend = 0.0);

    double spot() const { return spot_; }
    double discount(double tau) const;
    double forward(double tau) const;
    double forward_ratio(double tau) const;  // f(tau) = F(tau) / S
    const std::vector<Pillar>& pillars() const { return pillars_; }

    // Same rates, different spot: forwards scale with the spot.
    TermStructure with_spot(double spot) const;

private:
    double spot_ = 1.0;
    std::vector<Pillar> pillars_;
    std::vector<double> log_df_;
    std::vector<double> log_f_;
};

struct DiscountForward {
    double discount;
    double forward;
};

// Least-squares fit of C - P = DF*F - DF*K over strikes quoted as both a
// call and a put at `expiry`.
DiscountForward extract_forward_discount(const std::vector<OptionQuote>& chain, Date expiry);

// One pillar per expiry with at least two put/call pairs; other expiries are
// listed in `skipped`.
struct TermFit {
    TermStructure term;
    std::vector<Date> expiries;
    std::vector<Date> skipped;
};
TermFit fit_term_structure(const std::vector<OptionQuote>& chain, double spot);

struct DropRecord {
    std::size_t index;  // position in the input chain
    std::string reason;
};

struct SanitizedChain {
    std::vector<OptionQuote> calls;  // call-equivalent quotes, sorted
    std::vector<DropRecord> dropped;
};

SanitizedChain sanitize_chain(const std::vector<OptionQuote>& chain, const TermStructure& term);

// The fixed (tau, k) lattice: one k column per maturity, ascending in k.
struct Lattice {
    std::vector<double> taus;
    std::vector<std::vector<double>> ks;

    std::size_t node_count() const;
    // Row-major flat index over (tau, k).
    std::size_t flat(std::size_t tau_index, std::size_t k_index) const;

    // Maturities {2,5,10,21,42,63,126,252}/252 and 17 deltas from 0.015 to
    // 0.985 mapped to k at a symbolic volatility of 0.1.
    static Lattice standard();
    static Lattice from_deltas(const std::vector<double>& taus, const std::vector<double>& deltas,
                               double symbolic_vol);
};

std::vector<double> standard_grid_taus();
std::vector<double> standard_grid_deltas();

struct SmileSlope {
    double value;
    bool extrapolated;
};

// Read-only view of an implied volatility surface with its term structure.
class VolSurface {
public:
    virtual ~VolSurface() = default;
    virtual double spot() const = 0;
    virtual double discount(double tau) const = 0;
    virtual double forward(double tau) const = 0;
    virtual double iv(double tau, double k) const = 0;
    virtual double smile_slope(double tau, double k) const = 0;
};

// Implied volatilities on a lattice. Off-lattice values: linear in k within
// a maturity (flat beyond the column), total variance linear in tau with a
// zero anchor at tau = 0 and flat volatility beyond the last maturity.
class SurfaceGrid : public VolSurface {
public:
    SurfaceGrid() = default;
    SurfaceGrid(Lattice lattice, std::vector<std::vector<double>> vols, TermStructure term);

    const Lattice& lattice() const { return lattice_; }
    const std::vector<std::vector<double>>& vols() const { return vols_; }
    const TermStructure& term() const { return term_; }

    double spot() const override { return term_.spot(); }
    double discount(double tau) const override { return term_.discount(tau); }
    double forward(double tau) const override { return term_.forward(tau); }
    double iv(double tau, double k) const override;
    double smile_slope(double tau, double k) const override;

    SmileSlope slope_detail(double tau, double k) const;
    double normalized_call(double tau, double k) const;
    std::vector<std::vector<double>> normalized_prices() const;

    // Vols flattened in Lattice::flat order.
    std::vector<double> flat_vols() const;
    SurfaceGrid with_vols(std::vector<std::vector<double>> vols) const;
    SurfaceGrid with_term(TermStructure term) const;

private:
    double slice_iv(std::size_t j, double k) const;
    SmileSlope slice_slope(std::size_t j, double k) const;

    Lattice lattice_;
    std::vector<std::vector<double>> vols_;
    TermStructure term_;
};

struct GridBuild {
    SurfaceGrid grid;
    std::vector<std::string> warnings;
    std::size_t repaired_violations = 0;
};

// Builds the lattice surface from sanitized call quotes (all sharing one
// as_of date). Throws InsufficientData when no expiry has two usable quotes.
GridBuild build_surface_grid(const std::vector<OptionQuote>& calls, const TermStructure& term,
                             const Lattice& lattice = Lattice::standard());

// Same construction from per-expiry smiles already in (tau, k, sigma) form.
struct Smile {
    double tau;
    std::vector<double> ks;     // ascending
    std::vector<double> vols;
};
GridBuild build_surface_grid(const std::vector<Smile>& smiles, const TermStructure& term,
                             const Lattice& lattice = Lattice::standard());

enum class ArbitrageKind { lower_bound, upper_bound, monotonicity, convexity, calendar };
const char* to_string(ArbitrageKind kind);

struct Violation {
    std::size_t tau_index;
    std::size_t k_index;
    ArbitrageKind kind;
    double amount;
};

struct ArbitrageReport {
    std::vector<Violation> violations;
    std::vector<std::vector<double>> repaired_prices;  // normalized calls
    std::size_t count(ArbitrageKind kind) const;
};

// Checks normalized call prices c(tau_j, k_m) for: intrinsic <= c <= 1,
// decreasing and convex in strike, and non-decreasing in tau at fixed k.
// The repair is the least-squares projection of each slice (shortest
// maturity first) onto those constraints, the calendar bound coming from the
// already repaired shorter slice.
ArbitrageReport static_arbitrage_report(const Lattice& lattice,
                                        const std::vector<std::vector<double>>& prices);

struct GridRepair {
    ArbitrageReport report;
    SurfaceGrid repaired;
};
GridRepair static_arbitrage_report(const SurfaceGrid& grid);

// `tau_days,k,sigma` with tau in trading days (tau * 252).
void write_grid_csv(std::ostream& out, const SurfaceGrid& grid);
// The term structure is not part of the file; it is supplied by the caller.
SurfaceGrid read_grid_csv(std::istream& in, const TermStructure& term);

}  // namespace imargin::market
