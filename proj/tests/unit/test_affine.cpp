#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "affine_instances.hpp"
#include "imargin/affine.hpp"
#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "imargin/marketdata.hpp"
#include "support.hpp"

using namespace imargin;
using namespace imargin::affine;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Price history generated exactly as g0 + g xi.
struct Synthetic {
    market::Lattice lattice;
    VectorXd g0;
    MatrixXd g;
    MatrixXd xi;
    MatrixXd prices;
};

Synthetic synthetic_history(std::size_t days, int d, std::uint64_t seed) {
    Synthetic out;
    out.lattice = instances::small_lattice();
    const auto sf = instances::smile_surfaces(out.lattice, 0.22, -0.15, d);
    out.g0 = sf.g0();
    out.g = sf.g();
    testing::Gen gen(seed);
    out.xi.resize(static_cast<Eigen::Index>(days), d);
    for (Eigen::Index t = 0; t < out.xi.rows(); ++t)
        for (int i = 0; i < d; ++i) out.xi(t, i) = gen.uniform(-0.003, 0.003);
    out.prices = (out.xi * out.g.transpose()).rowwise() + out.g0.transpose();
    return out;
}

// Largest principal angle between the column spans of a and b, from its sine
// (the cosine loses half the digits near zero).
double max_principal_angle(const MatrixXd& a, const MatrixXd& b) {
    const MatrixXd qa = a.householderQr().householderQ() * MatrixXd::Identity(a.rows(), a.cols());
    const MatrixXd qb = b.householderQr().householderQ() * MatrixXd::Identity(b.rows(), b.cols());
    const MatrixXd off = qb - qa * (qa.transpose() * qb);
    const Eigen::JacobiSVD<MatrixXd> svd(off);
    return std::asin(std::min(1.0, svd.singularValues().maxCoeff()));
}

// Black-Scholes smiles sigma(k) = level + skew k with level and skew moving
// day to day: arbitrage-free every day, close to but not exactly affine.
MatrixXd smile_history(const market::Lattice& lat, std::size_t days, std::uint64_t seed) {
    testing::Gen gen(seed);
    MatrixXd out(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(lat.node_count()));
    for (Eigen::Index t = 0; t < out.rows(); ++t) {
        const double level = 0.22 + 0.02 * gen.normal(), skew = -0.15 + 0.04 * gen.normal();
        for (std::size_t j = 0; j < lat.taus.size(); ++j)
            for (std::size_t m = 0; m < lat.ks[j].size(); ++m) {
                const double k = lat.ks[j][m], sigma = std::max(level + skew * k, 0.05);
                out(t, static_cast<Eigen::Index>(lat.flat(j, m))) =
                    bs::normalized_call(k, sigma * std::sqrt(lat.taus[j]));
            }
    }
    return out;
}

// Two maturities with a single k node each: c is flat in k and linear in tau.
AffineModel two_node_model() {
    market::Lattice lat;
    lat.taus = {0.25, 0.5};
    lat.ks = {{0.0}, {0.0}};
    VectorXd g0(2);
    g0 << 0.04, 0.06;
    MatrixXd g(2, 1);
    g << 0.1, 0.14;
    AffineModel m;
    m.surfaces = FactorSurfaces(lat, g0, g);
    m.term = market::TermStructure::flat(100.0, 0.02, 0.01);
    m.xi = VectorXd::Constant(1, 0.05);
    m.dyn.alpha = 0.03;
    m.dyn.beta = 0.2;
    m.dyn.mu = VectorXd::Constant(1, 0.01);
    m.dyn.sigma = MatrixXd::Constant(1, 1, 0.3);
    m.corr.p_s_xi = VectorXd::Constant(1, -0.6);
    m.corr.p_xi = MatrixXd::Identity(1, 1);
    return m;
}

double quantile_type7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("calibration recovers an exactly affine history", "[affine][calibrate]") {
    const auto syn = synthetic_history(300, 2, 11);
    for (Eigen::Index t = 0; t < syn.prices.rows(); ++t) {
        std::vector<std::vector<double>> day(syn.lattice.taus.size());
        for (std::size_t j = 0; j < day.size(); ++j)
            for (std::size_t m = 0; m < syn.lattice.ks[j].size(); ++m)
                day[j].push_back(syn.prices(t, static_cast<Eigen::Index>(syn.lattice.flat(j, m))));
        REQUIRE(market::static_arbitrage_report(syn.lattice, day).violations.empty());
    }
    const auto cal = calibrate_factors(syn.lattice, syn.prices, 2, Extension::interpolate);
    CHECK(cal.mape < 1e-10);
    CHECK(max_principal_angle(cal.surfaces.g(), syn.g) < 1e-8);
    const MatrixXd rebuilt = (cal.xi_history * cal.surfaces.g().transpose()).rowwise() + cal.surfaces.g0().transpose();
    CHECK((rebuilt - syn.prices).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(cal.surfaces.g0().isApprox(syn.prices.colwise().mean().transpose(), 1e-14));
    for (Eigen::Index i = 0; i < cal.surfaces.g().cols(); ++i) {
        const auto col = cal.surfaces.g().col(i);
        Eigen::Index first = 0;
        while (std::abs(col[first]) <= 1e-12 * col.cwiseAbs().maxCoeff()) ++first;
        CHECK(col[first] > 0.0);
    }
}

TEST_CASE("calibration edge cases", "[affine][calibrate]") {
    const auto lat = instances::small_lattice();
    const auto base = instances::smile_surfaces(lat, 0.2, -0.1, 1).g0();
    MatrixXd constant = base.transpose().replicate(40, 1);

    SECTION("constant history") {
        const auto cal = calibrate_factors(lat, constant, 0, Extension::interpolate);
        CHECK(cal.surfaces.g0().isApprox(base, 1e-15));
        CHECK(cal.xi_history.cols() == 0);
        CHECK(cal.mape < 1e-15);
        CHECK_THROWS_AS(calibrate_factors(lat, constant, 1, Extension::interpolate), DomainError);
    }
    SECTION("d = 0 keeps the mean and reports the mean absolute relative residual") {
        const auto syn = synthetic_history(50, 1, 3);
        const auto cal = calibrate_factors(syn.lattice, syn.prices, 0, Extension::interpolate);
        const VectorXd mean = syn.prices.colwise().mean().transpose();
        double acc = 0.0;
        for (Eigen::Index t = 0; t < syn.prices.rows(); ++t)
            for (Eigen::Index j = 0; j < syn.prices.cols(); ++j)
                acc += std::abs(mean[j] - syn.prices(t, j)) / std::abs(syn.prices(t, j));
        CHECK_THAT(cal.mape, WithinRel(acc / static_cast<double>(syn.prices.size()), 1e-12));
        CHECK(cal.surfaces.dim() == 0);
    }
    SECTION("rank deficiency and short histories") {
        const auto syn = synthetic_history(60, 1, 5);
        CHECK_THROWS_AS(calibrate_factors(syn.lattice, syn.prices, 2, Extension::interpolate), DomainError);
        CHECK_THROWS_AS(calibrate_factors(syn.lattice, syn.prices.topRows(2), 2, Extension::interpolate),
                        InsufficientData);
    }
}

TEST_CASE("dynamics estimated from an Euler-simulated history", "[affine][dynamics]") {
    const double h = 1.0 / 252;
    const std::size_t days = 10000;
    VectorXd mu(2);
    mu << 0.3, -0.2;
    MatrixXd sigma(2, 2);
    sigma << 0.25, 0.05, 0.05, 0.4;
    const double rho0 = -0.5, rho1 = 0.2;
    // Both drivers load on the spot shock, so they are correlated rho0 rho1.
    MatrixXd p_w(2, 2);
    p_w << 1.0, rho0 * rho1, rho0 * rho1, 1.0;
    testing::Gen gen(97);
    std::vector<double> spot{100.0};
    MatrixXd xi = MatrixXd::Zero(static_cast<Eigen::Index>(days + 1), 2);
    for (std::size_t t = 0; t < days; ++t) {
        const double e0 = gen.normal(), e1 = gen.normal(), e2 = gen.normal();
        spot.push_back(spot.back() * std::exp((0.05 - 0.5 * 0.04) * h + 0.2 * std::sqrt(h) * e0));
        VectorXd w(2);
        w << rho0 * e0 + std::sqrt(1 - rho0 * rho0) * e1, rho1 * e0 + std::sqrt(1 - rho1 * rho1) * e2;
        const auto r = static_cast<Eigen::Index>(t);
        xi.row(r + 1) = xi.row(r) + (mu * h + std::sqrt(h) * sigma * w).transpose();
    }
    const auto est = estimate_dynamics(spot, xi, h);
    const MatrixXd cov = sigma * p_w * sigma.transpose();
    const double n_years = static_cast<double>(days) * h;
    for (Eigen::Index i = 0; i < 2; ++i) {
        const double se = std::sqrt(cov(i, i) / n_years);
        CHECK(std::abs(est.dyn.mu[i] - mu[i]) < 3.0 * se);
    }
    const MatrixXd got = est.dyn.sigma * est.dyn.sigma.transpose();
    CHECK((got - cov).norm() / cov.norm() < 0.05);
    CHECK(est.corr.p_xi.isApprox(MatrixXd::Identity(2, 2)));
    CHECK_THAT(est.dyn.beta, WithinAbs(0.2, 0.05));

    // The whitened correlations reproduce the covariance of (log-return, increment).
    const VectorXd cross = est.dyn.sigma * est.corr.p_s_xi;
    VectorXd expect(2);
    expect = sigma * (VectorXd(2) << rho0, rho1).finished();
    CHECK((cross - expect).norm() < 0.05 * expect.norm() + 0.02);
}

TEST_CASE("dynamics of independent and constant histories", "[affine][dynamics]") {
    const double h = 1.0 / 252;
    testing::Gen gen(5);
    std::vector<double> spot{50.0};
    MatrixXd xi = MatrixXd::Zero(2001, 1);
    for (Eigen::Index t = 0; t < 2000; ++t) {
        spot.push_back(spot.back() * std::exp(0.3 * std::sqrt(h) * gen.normal()));
        xi(t + 1, 0) = xi(t, 0) + 0.2 * std::sqrt(h) * gen.normal();
    }
    const auto ind = estimate_dynamics(spot, xi, h);
    CHECK(std::abs(ind.corr.p_s_xi[0]) < 0.05);

    const MatrixXd flat = MatrixXd::Constant(200, 2, 0.7);
    const auto still = estimate_dynamics(std::vector<double>(spot.begin(), spot.begin() + 200), flat, h);
    CHECK(still.dyn.mu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(still.dyn.sigma.cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(still.warnings.empty());

    const auto short_run = estimate_dynamics(std::vector<double>(spot.begin(), spot.begin() + 20),
                                             xi.topRows(20), h);
    CHECK_FALSE(short_run.warnings.empty());
}

TEST_CASE("nearest correlation matrix", "[affine][dynamics]") {
    MatrixXd a(3, 3);
    a << 1, 0.9, -0.9, 0.9, 1, 0.9, -0.9, 0.9, 1;
    const MatrixXd c = nearest_correlation(a);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c);
    CHECK(eig.eigenvalues().minCoeff() > -1e-10);
    CHECK(c.diagonal().isApprox(VectorXd::Ones(3), 1e-12));
    CHECK(c.isApprox(c.transpose()));
    const MatrixXd ok = MatrixXd::Identity(3, 3);
    CHECK(nearest_correlation(ok).isApprox(ok));
}

TEST_CASE("price surface is affine in xi and exact on nodes", "[affine][surface]") {
    auto inst = instances::random_instance(42);
    const auto& m = inst.model;
    testing::Gen gen(8);
    for (int trial = 0; trial < 200; ++trial) {
        const double tau = gen.uniform(1.0 / 12, 1.0), k = gen.uniform(-0.3, 0.3);
        VectorXd x1(static_cast<Eigen::Index>(m.dim())), x2(static_cast<Eigen::Index>(m.dim()));
        for (Eigen::Index i = 0; i < x1.size(); ++i) {
            x1[i] = gen.uniform(-0.1, 0.1);
            x2[i] = gen.uniform(-0.1, 0.1);
        }
        const double g0 = m.surfaces.at(tau, k).g0;
        CHECK_THAT(price_surface(m, VectorXd::Zero(x1.size()), tau, k), WithinAbs(g0, 0.0));
        const double lhs = price_surface(m, x1, tau, k) + price_surface(m, x2, tau, k) -
                           price_surface(m, x1 + x2, tau, k);
        CHECK_THAT(lhs, WithinAbs(g0, 1e-15));
    }
    const auto& lat = m.surfaces.lattice();
    const VectorXd xi = VectorXd::Constant(static_cast<Eigen::Index>(m.dim()), 0.03);
    for (std::size_t j = 0; j < lat.taus.size(); ++j)
        for (std::size_t i = 0; i < lat.ks[j].size(); ++i) {
            const auto n = static_cast<Eigen::Index>(lat.flat(j, i));
            const double direct = m.surfaces.g0()[n] + m.surfaces.g().row(n).dot(xi);
            CHECK_THAT(price_surface(m, xi, lat.taus[j], lat.ks[j][i]), WithinAbs(direct, 1e-12));
        }
    CHECK(m.surfaces.at(0.5, 5.0).extrapolated);
    CHECK_FALSE(m.surfaces.at(0.5, 0.01).extrapolated);
}

TEST_CASE("regression extension", "[affine][surface]") {
    Synthetic syn;
    syn.lattice = instances::small_lattice();
    syn.prices = smile_history(syn.lattice, 120, 21);
    const auto cal = calibrate_factors(syn.lattice, syn.prices, 2, Extension::regression);
    const auto& sf = cal.surfaces;
    CHECK(sf.extension() == Extension::regression);
    const auto& lat = sf.lattice();
    // Nodes keep the calibrated values.
    const auto n = static_cast<Eigen::Index>(lat.flat(2, 4));
    const auto pt = sf.at(lat.taus[2], lat.ks[2][4]);
    CHECK(pt.g0 == sf.g0()[n]);
    CHECK(pt.g == VectorXd(sf.g().row(n).transpose()));
    // Between nodes: least squares of the per-day interpolated prices on (1, xi).
    const double tau = 0.2, k = 0.013;
    const auto off = sf.at(tau, k);
    const auto days = syn.prices.rows();
    VectorXd y(days);
    MatrixXd x(days, 3);
    for (Eigen::Index t = 0; t < days; ++t) {
        std::vector<std::vector<double>> vols(lat.taus.size());
        for (std::size_t j = 0; j < lat.taus.size(); ++j)
            for (std::size_t i = 0; i < lat.ks[j].size(); ++i)
                vols[j].push_back(bs::implied_vol_normalized(
                    syn.prices(t, static_cast<Eigen::Index>(lat.flat(j, i))), lat.ks[j][i], lat.taus[j]));
        const market::SurfaceGrid day(lat, vols, market::TermStructure::flat(1.0));
        y[t] = day.normalized_call(tau, k);
        x(t, 0) = 1.0;
        x.block(t, 1, 1, 2) = cal.xi_history.row(t);
    }
    const VectorXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    CHECK_THAT(off.g0, WithinAbs(beta[0], 1e-10));
    CHECK_THAT(off.g[0], WithinAbs(beta[1], 1e-8 * std::abs(beta[1]) + 1e-10));
    CHECK_THAT(off.g[1], WithinAbs(beta[2], 1e-8 * std::abs(beta[2]) + 1e-10));
    const VectorXd xi = VectorXd::Constant(2, 0.01);
    CHECK_THAT(sf.price(xi, tau, k), WithinAbs(off.g0 + off.g.dot(xi), 1e-15));
}

TEST_CASE("P&L coefficients", "[affine][pnl]") {
    SECTION("A vanishes at h = 0, S = S_t") {
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto inst = instances::random_instance(500 + s);
            const PnlCoeffs pnl(inst.model, inst.portfolio);
            CHECK(pnl(0.0, inst.model.spot()).a == 0.0);
        }
    }
    SECTION("zero quantities") {
        auto inst = instances::random_instance(77);
        for (auto& p : inst.portfolio) p.quantity = 0.0;
        const PnlCoeffs pnl(inst.model, inst.portfolio);
        for (double s : {80.0, 100.0, 130.0}) {
            const auto pt = pnl(0.01, s);
            CHECK(pt.a == 0.0);
            CHECK(pt.b.cwiseAbs().maxCoeff() == 0.0);
        }
    }
    SECTION("single call on the two-node model, expanded by hand") {
        const auto m = two_node_model();
        const double strike = m.term.forward(0.5);
        const Portfolio pf{{Instrument::call, 2.0, strike, 0.5, "c"}};
        const PnlCoeffs pnl(m, pf);
        const double h = 0.02, s = 97.0;
        // c(tau) = G0(tau) + G(tau) xi, both linear between 0.25 and 0.5.
        const double w = (0.5 - h - 0.25) / 0.25;
        const double g0 = 0.04 + w * 0.02, g1 = 0.1 + w * 0.04;
        const double tau = 0.5 - h;
        const double df = std::exp(-0.02 * tau), f = std::exp(0.01 * tau);
        const double value0 = 2.0 * 100.0 * std::exp(-0.02 * 0.5) * std::exp(0.01 * 0.5) * (0.06 + 0.14 * 0.05);
        const double a = 2.0 * s * df * f * (g0 + g1 * 0.05) - value0;
        const double b = 2.0 * s * df * f * g1;
        const auto pt = pnl(h, s);
        CHECK_THAT(pnl.value(), WithinRel(value0, 1e-13));
        CHECK_THAT(pt.a, WithinRel(a, 1e-12));
        CHECK_THAT(pt.b[0], WithinRel(b, 1e-13));
        const double shock = (std::log(s / 100.0) - (0.03 - 0.02) * h) / 0.2;
        const double mean = 0.01 * h + shock * 0.3 * -0.6;
        CHECK_THAT(pt.a_hat, WithinAbs(a + b * mean, 1e-12 * value0));
        CHECK_THAT(std::abs(pt.b_hat[0]), WithinRel(std::sqrt(h) * b * 0.3 * 0.8, 1e-12));
    }
    SECTION("put-call parity and out-of-lattice maturities") {
        const auto m = two_node_model();
        const double strike = 104.0;
        const Portfolio call{{Instrument::call, 1.0, strike, 0.5, "c"}};
        const Portfolio put{{Instrument::put, 1.0, strike, 0.5, "p"},
                            {Instrument::spot, 1.0, 0.0, 0.0, "s"}};
        const PnlCoeffs pc(m, call), pp(m, put);
        const double h = 0.05;
        for (double s : {90.0, 100.0, 115.0}) {
            const double tau = 0.5 - h;
            const double fwd_line = s * std::exp(-0.01 * tau) - strike * std::exp(-0.02 * tau);
            const double spot_line = s - 100.0;
            const double fwd0 = 100.0 * std::exp(-0.01 * 0.5) - strike * std::exp(-0.02 * 0.5);
            CHECK_THAT(pp(h, s).a - spot_line + (fwd_line - fwd0), WithinAbs(pc(h, s).a, 1e-11));
            CHECK((pp(h, s).b - pc(h, s).b).norm() < 1e-13);
        }
        CHECK_THROWS_AS(pc(0.3, 100.0), DomainError);
    }
}

TEST_CASE("conditional moments", "[affine][moments]") {
    auto m = two_node_model();
    SECTION("independent drivers") {
        m.corr.p_s_xi.setZero();
        const auto cm = conditional_moments(m, 0.01, 93.0);
        CHECK_THAT(cm.m[0], WithinAbs(0.01 * 0.01, 1e-18));
        CHECK_THAT(cm.v(0, 0), WithinRel(0.01 * 0.09, 1e-14));
    }
    SECTION("zero shock") {
        const double h = 0.01;
        const double s = 100.0 * std::exp((0.03 - 0.5 * 0.04) * h);
        CHECK_THAT(conditional_moments(m, h, s).m[0], WithinAbs(0.01 * h, 1e-15));
    }
    SECTION("one factor") {
        const auto cm = conditional_moments(m, 0.01, 100.0);
        CHECK_THAT(cm.v(0, 0), WithinRel(0.01 * 0.09 * (1 - 0.36), 1e-13));
    }
    SECTION("beta must be positive") {
        m.dyn.beta = 0.0;
        CHECK_THROWS_AS(conditional_moments(m, 0.01, 100.0), DomainError);
    }
}

TEST_CASE("conditional moments match simulated buckets", "[affine][moments]") {
    const auto inst = instances::random_instance(2024);
    auto m = inst.model;
    const double h = 1.0 / 252;
    const std::size_t n = 200000;
    const auto draws = simulate_one_step(m, h, n, 99);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return draws.spot[a] < draws.spot[b]; });
    const auto d = static_cast<Eigen::Index>(m.dim());
    const std::size_t buckets = 10, per = n / buckets;
    for (std::size_t bkt = 0; bkt < buckets; ++bkt) {
        VectorXd mean_obs = VectorXd::Zero(d), mean_model = VectorXd::Zero(d), sq = VectorXd::Zero(d);
        MatrixXd v;
        for (std::size_t r = bkt * per; r < (bkt + 1) * per; ++r) {
            const auto i = static_cast<Eigen::Index>(order[r]);
            const auto cm = conditional_moments(m, h, draws.spot[order[r]]);
            const VectorXd resid = draws.dxi.row(i).transpose() - cm.m;
            mean_obs += draws.dxi.row(i).transpose();
            mean_model += cm.m;
            sq += resid.cwiseProduct(resid);
            v = cm.v;
        }
        const double cnt = static_cast<double>(per);
        mean_obs /= cnt;
        mean_model /= cnt;
        sq /= cnt;
        for (Eigen::Index j = 0; j < d; ++j) {
            CHECK(std::abs(mean_obs[j] - mean_model[j]) < 3.0 * std::sqrt(v(j, j) / cnt));
            CHECK(std::abs(sq[j] - v(j, j)) < 3.0 * v(j, j) * std::sqrt(2.0 / cnt));
        }
    }
}

TEST_CASE("quasi-explicit VaR degenerate cases", "[affine][var]") {
    auto m = two_node_model();
    const Portfolio pf{{Instrument::call, 1.0, 98.0, 0.5, "c"}, {Instrument::put, -2.0, 95.0, 0.5, "p"}};
    const double h = 1.0 / 252, theta = 0.99;
    m.dyn.beta = 0.0;
    SECTION("deterministic spot") {
        const PnlCoeffs pnl(m, pf);
        const auto pt = pnl(h, 100.0 * std::exp(m.dyn.alpha * h));
        const double expect = pt.a_hat + testing::inv_Phi(1 - theta) * pt.b_hat.norm();
        const auto q = quasi_explicit_var(m, pf, theta, h);
        CHECK_THAT(q.var, WithinAbs(expect, 1e-10 * std::abs(expect)));
    }
    SECTION("deterministic spot and factors") {
        m.dyn.sigma.setZero();
        const PnlCoeffs pnl(m, pf);
        const auto pt = pnl(h, 100.0 * std::exp(m.dyn.alpha * h));
        const auto q = quasi_explicit_var(m, pf, theta, h);
        CHECK_THAT(q.var, WithinAbs(pt.a_hat, 1e-10 * std::abs(pt.a_hat)));
        EmpiricalOptions eo;
        eo.n_sims = 5000;
        const auto e = empirical_var(m, pf, theta, h, eo);
        const auto [lo, hi] = std::minmax_element(e.pnl.begin(), e.pnl.end());
        CHECK(*lo == *hi);
        CHECK_THAT(e.var, WithinAbs(pt.a_hat, 1e-10 * std::abs(pt.a_hat)));
    }
    SECTION("the t law has no quasi-explicit form") {
        QuasiOptions o;
        o.law = SpotLaw::tstudent;
        CHECK_THROWS_AS(quasi_explicit_var(m, pf, theta, h, o), DomainError);
    }
}

TEST_CASE("closed formula", "[affine][var]") {
    SECTION("no idiosyncratic factor risk") {
        auto inst = instances::random_instance(3);
        auto m = inst.model;
        m.corr.p_s_xi = VectorXd::Zero(static_cast<Eigen::Index>(m.dim()));
        m.corr.p_s_xi[0] = 1.0;
        m.corr.p_xi = MatrixXd::Identity(static_cast<Eigen::Index>(m.dim()), static_cast<Eigen::Index>(m.dim()));
        if (m.dim() == 2) m.dyn.sigma.col(1).setZero();
        const auto e = exposure(m, inst.portfolio);
        CHECK(e.q < 1e-12 * std::max(1.0, std::abs(e.c)));
        CHECK_THAT(closed_var(m, inst.portfolio, 0.99, 0.01),
                   WithinRel(testing::inv_Phi(0.01) * std::abs(e.c) * 0.1, 1e-9));
    }
    SECTION("d = 1 agrees with the one-factor expression") {
        const auto m = two_node_model();
        const double strike = 100.0 * std::exp(0.01 * 0.5);
        const Portfolio pf{{Instrument::call, 3.0, strike, 0.5, "c"}};
        // dc/dk is zero on a flat column, so dPi/dS = q DF f c and dPi/dxi = q S DF f G.
        const double df = std::exp(-0.02 * 0.5), f = std::exp(0.01 * 0.5);
        const double d_spot = 3.0 * df * f * (0.06 + 0.14 * 0.05);
        const double d_xi = 3.0 * 100.0 * df * f * 0.14;
        const double one = closed_var_one_factor(m, d_spot, d_xi, 0.99, 0.01);
        CHECK_THAT(closed_var(m, pf, 0.99, 0.01), WithinAbs(one, 1e-12 * std::abs(one)));
        const double x = 100.0 * 0.2 * d_spot, y = 0.3 * d_xi;
        CHECK_THAT(one, WithinRel(testing::inv_Phi(0.01) * std::sqrt(x * x + y * y - 1.2 * x * y) * 0.1, 1e-9));
    }
    SECTION("d = 1 random instances through both paths") {
        for (std::uint64_t s = 0; s < 40; ++s) {
            const auto inst = instances::random_instance(700 + s);
            if (inst.model.dim() != 1) continue;
            const auto e = exposure(inst.model, inst.portfolio);
            const double one = closed_var_one_factor(inst.model, e.d_spot, e.d_xi[0], 0.99, 1.0 / 252);
            const double two = closed_var(inst.model, inst.portfolio, 0.99, 1.0 / 252);
            CHECK(std::abs(one - two) <= 1e-12 * std::abs(one));
        }
    }
    SECTION("t law") {
        const auto inst = instances::random_instance(9);
        ClosedOptions o;
        o.law = SpotLaw::tstudent;
        const double t = closed_var(inst.model, inst.portfolio, 0.99, 1.0 / 252, o);
        const double g = closed_var(inst.model, inst.portfolio, 0.99, 1.0 / 252);
        CHECK(t < g);
        CHECK(t == closed_var(inst.model, inst.portfolio, 0.99, 1.0 / 252, o));
        o.nu = 2.0;
        CHECK_THROWS_AS(closed_var(inst.model, inst.portfolio, 0.99, 1.0 / 252, o), DomainError);
    }
}

TEST_CASE("portfolio sign symmetry of the closed formulas", "[affine][var][property]") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto inst = instances::random_instance(900 + s);
        const auto neg = negate(inst.portfolio);
        for (double h : {1e-4, 1.0 / 252}) {
            CHECK(closed_var(inst.model, inst.portfolio, 0.99, h) == closed_var(inst.model, neg, 0.99, h));
            ClosedOptions o;
            o.law = SpotLaw::normal;
            CHECK(closed_var(inst.model, inst.portfolio, 0.99, h, o) == closed_var(inst.model, neg, 0.99, h, o));
            o.law = SpotLaw::tstudent;
            o.n_draws = 20000;
            CHECK(closed_var(inst.model, inst.portfolio, 0.99, h, o) == closed_var(inst.model, neg, 0.99, h, o));
        }
    }
}

TEST_CASE("closed formula approaches the quasi-explicit value as h shrinks", "[affine][var][property]") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto inst = instances::random_instance(1000 + s);
        auto gap = [&](double h) {
            const double q = quasi_explicit_var(inst.model, inst.portfolio, 0.99, h).var;
            return std::abs(closed_var(inst.model, inst.portfolio, 0.99, h) - q) / std::abs(q);
        };
        const double coarse = gap(1e-3), fine = gap(1e-5);
        CHECK(fine < 0.2 * coarse + 1e-6);
    }
}

TEST_CASE("quasi-explicit and Monte Carlo VaR agree", "[affine][var][property]") {
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto inst = instances::random_instance(1000 + s);
        const double h = 1.0 / 252;
        const auto q = quasi_explicit_var(inst.model, inst.portfolio, 0.99, h);
        const auto e = empirical_var(inst.model, inst.portfolio, 0.99, h);
        CHECK(std::abs(q.var - e.var) < 3.0 * e.std_error);
    }
}

TEST_CASE("empirical VaR is the sample quantile of the simulated P&L", "[affine][var]") {
    const auto inst = instances::random_instance(1234);
    EmpiricalOptions o;
    o.n_sims = 20000;
    const auto e = empirical_var(inst.model, inst.portfolio, 0.99, 1.0 / 252, o);
    CHECK(e.pnl.size() == 20000);
    CHECK(e.var == quantile_type7(e.pnl, 0.01));
    CHECK(e.std_error > 0.0);
    const auto again = empirical_var(inst.model, inst.portfolio, 0.99, 1.0 / 252, o);
    CHECK(again.pnl == e.pnl);

    // The P&L is exactly A + B . dxi on the simulated points.
    const PnlCoeffs pnl(inst.model, inst.portfolio);
    const auto draws = simulate_one_step(inst.model, 1.0 / 252, 20000, o.seed);
    for (std::size_t i = 0; i < 50; ++i) {
        const auto pt = pnl(1.0 / 252, draws.spot[i]);
        const double lin = pt.a + pt.b.dot(draws.dxi.row(static_cast<Eigen::Index>(i)).transpose());
        CHECK_THAT(e.pnl[i], WithinAbs(lin, 1e-10 * std::max(1.0, std::abs(lin))));
    }
}

TEST_CASE("reconstructed history respects static no-arbitrage", "[affine][surface]") {
    const auto lat = instances::small_lattice();
    const auto cal = calibrate_factors(lat, smile_history(lat, 200, 31), 2, Extension::interpolate);
    CHECK(history_arbitrage_violations(cal.surfaces) == 0);
}

TEST_CASE("model file round trip is bit-stable", "[affine][io]") {
    Synthetic syn;
    syn.lattice = instances::small_lattice();
    syn.prices = smile_history(syn.lattice, 40, 17);
    for (auto ext : {Extension::interpolate, Extension::regression}) {
        AffineModel m = instances::random_instance(4).model;
        const auto cal = calibrate_factors(syn.lattice, syn.prices, 2, ext);
        m.surfaces = cal.surfaces;
        m.xi = cal.xi_history.row(cal.xi_history.rows() - 1).transpose();
        m.dyn.mu = VectorXd::Constant(2, 1.0 / 3.0);
        m.dyn.sigma = MatrixXd::Identity(2, 2) * 0.1;
        m.corr.p_s_xi = VectorXd::Constant(2, -0.1);
        m.corr.p_xi = MatrixXd::Identity(2, 2);
        m.term = market::TermStructure::flat(101.3, 0.0123, 0.004);
        std::ostringstream first;
        write_model(first, m);
        std::istringstream in(first.str());
        const auto back = read_model(in);
        std::ostringstream second;
        write_model(second, back);
        CHECK(first.str() == second.str());
        CHECK(back.surfaces.g() == m.surfaces.g());
        CHECK(back.surfaces.price_history() == m.surfaces.price_history());
        CHECK(back.dyn.mu == m.dyn.mu);
        const VectorXd x = VectorXd::Constant(2, 0.02);
        CHECK(price_surface(back, x, 0.3, 0.05) == price_surface(m, x, 0.3, 0.05));
    }
    std::istringstream bad("imargin-affine,1\nspot,100\nwhat,1\n");
    CHECK_THROWS_AS(read_model(bad), ConfigError);
    std::istringstream version("imargin-affine,9\n");
    CHECK_THROWS_AS(read_model(version), ConfigError);
}
