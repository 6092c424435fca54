#include "imargin/affine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "imargin/normal.hpp"
#include "imargin/parallel.hpp"
#include "imargin/quadrature.hpp"
#include "imargin/random.hpp"
#include "imargin/roots.hpp"
#include "imargin/shortterm.hpp"
#include "imargin/stats.hpp"

namespace imargin::affine {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void check_level(double theta, double h) {
    if (!(theta > 0.5 && theta < 1.0)) throw DomainError("confidence level must be in (0.5, 1)");
    if (!(h >= 0.0) || !std::isfinite(h)) throw DomainError("margin period must be non-negative");
}

MatrixXd b_factor(const Correlation& corr, std::vector<std::string>* warnings) {
    const MatrixXd m = corr.p_xi - corr.p_s_xi * corr.p_s_xi.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
    const VectorXd lam = eig.eigenvalues();
    if (lam.size() && lam.minCoeff() < -1e-12 && warnings)
        warnings->push_back("p_xi - p_s_xi p_s_xi^T is not positive semi-definite; negative eigenvalues clipped");
    const VectorXd root = lam.cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

// W_{0,t+h} - W_{0,t} implied by S_{t+h} = s.
double spot_shock(const AffineModel& model, double h, double s, SpotLaw law) {
    const auto& dyn = model.dyn;
    if (dyn.beta == 0.0) return 0.0;
    const double s0 = model.spot();
    if (law == SpotLaw::lognormal) return (std::log(s / s0) - (dyn.alpha - 0.5 * dyn.beta * dyn.beta) * h) / dyn.beta;
    return (s - s0 * (1.0 + dyn.alpha * h)) / (s0 * dyn.beta);
}

// S_{t+h} for a standardized shock y.
double spot_of(const AffineModel& model, double h, double y, SpotLaw law) {
    const auto& dyn = model.dyn;
    const double s0 = model.spot(), sd = dyn.beta * std::sqrt(h);
    if (law == SpotLaw::lognormal) return s0 * std::exp((dyn.alpha - 0.5 * dyn.beta * dyn.beta) * h + sd * y);
    return s0 * (1.0 + dyn.alpha * h + sd * y);
}

std::string describe(const Position& p) {
    return p.label.empty() ? std::string("unnamed position") : "position '" + p.label + "'";
}

}  // namespace

ConditionalMoments conditional_moments(const AffineModel& model, double h, double s, SpotLaw law) {
    model.validate();
    if (!(model.dyn.beta > 0.0)) throw DomainError("conditional moments need beta > 0");
    if (!(h >= 0.0)) throw DomainError("margin period must be non-negative");
    ConditionalMoments out;
    out.b_factor = b_factor(model.corr, &out.warnings);
    const VectorXd sigma_p = model.dyn.sigma * model.corr.p_s_xi;
    out.m = model.dyn.mu * h + spot_shock(model, h, s, law) * sigma_p;
    const MatrixXd sb = model.dyn.sigma * out.b_factor;
    out.v = h * sb * sb.transpose();
    return out;
}

PnlCoeffs::PnlCoeffs(const AffineModel& model, const Portfolio& portfolio, SpotLaw law)
    : model_(&model), lines_(portfolio), law_(law) {
    model.validate();
    for (const auto& p : lines_) {
        if (!is_option(p.kind)) continue;
        if (!(p.tau > 0.0)) throw DomainError(describe(p) + " has expired");
        if (!(p.strike > 0.0)) throw DomainError(describe(p) + " needs a positive strike");
    }
    sigma_b_ = model.dyn.sigma * b_factor(model.corr, nullptr);
    sigma_p_ = model.dyn.sigma * model.corr.p_s_xi;
    value_ = value_at(0.0, model.spot(), model.xi);
}

double PnlCoeffs::value_at(double h, double s, const VectorXd& xi, std::size_t* bound_breaks) const {
    const auto& m = *model_;
    double total = 0.0;
    for (const auto& p : lines_) {
        if (p.quantity == 0.0) continue;
        if (p.kind == Instrument::cash) {
            total += p.quantity;
            continue;
        }
        if (p.kind == Instrument::spot) {
            total += p.quantity * s;
            continue;
        }
        const double tau = p.tau - h;
        if (!m.surfaces.in_tau_hull(tau)) {
            std::ostringstream msg;
            msg << describe(p) << ": time to expiry " << tau << " after the margin period is outside the lattice";
            throw DomainError(msg.str());
        }
        const double df = m.term.discount(tau), f = m.term.forward_ratio(tau);
        const double put_cash = p.kind == Instrument::put ? df * p.strike : 0.0;
        if (!(s > 0.0)) {
            total += p.quantity * put_cash;
            continue;
        }
        const double k = std::log(p.strike / (f * s));
        const double c = m.surfaces.price(xi, tau, k);
        if (bound_breaks && (c < bs::normalized_intrinsic(k) - 1e-12 || c > 1.0 + 1e-12)) ++*bound_breaks;
        const double scale = s * df * f;
        double v = scale * c;
        if (p.kind == Instrument::put) v += put_cash - scale;
        total += p.quantity * v;
    }
    return total;
}

PnlPoint PnlCoeffs::operator()(double h, double s) const {
    const auto& m = *model_;
    const auto d = static_cast<Eigen::Index>(m.dim());
    PnlPoint out;
    out.a = value_at(h, s, m.xi) - value_;
    out.b = VectorXd::Zero(d);
    for (const auto& p : lines_) {
        if (!is_option(p.kind) || p.quantity == 0.0 || !(s > 0.0)) continue;
        const double tau = p.tau - h;
        const double df = m.term.discount(tau), f = m.term.forward_ratio(tau);
        const auto pt = m.surfaces.at(tau, std::log(p.strike / (f * s)));
        out.extrapolated = out.extrapolated || pt.extrapolated;
        out.b += p.quantity * s * df * f * pt.g;
    }
    const VectorXd mean = m.dyn.mu * h + spot_shock(m, h, s, law_) * sigma_p_;
    out.a_hat = out.a + out.b.dot(mean);
    out.b_hat = std::sqrt(h) * (sigma_b_.transpose() * out.b);
    return out;
}

Exposure exposure(const AffineModel& model, const Portfolio& portfolio, double dk) {
    model.validate();
    if (!(dk > 0.0)) throw DomainError("exposure: k step must be positive");
    const auto d = static_cast<Eigen::Index>(model.dim());
    const double s = model.spot();
    Exposure out;
    out.d_xi = VectorXd::Zero(d);
    for (const auto& p : portfolio) {
        if (p.quantity == 0.0 || p.kind == Instrument::cash) continue;
        if (p.kind == Instrument::spot) {
            out.d_spot += p.quantity;
            continue;
        }
        if (!(p.tau > 0.0)) throw DomainError(describe(p) + " has expired");
        if (!model.surfaces.in_tau_hull(p.tau)) throw DomainError(describe(p) + ": maturity outside the lattice");
        const double df = model.term.discount(p.tau), f = model.term.forward_ratio(p.tau);
        const double k = std::log(p.strike / (f * s));
        const auto pt = model.surfaces.at(p.tau, k);
        const double c = pt.g0 + pt.g.dot(model.xi);
        const double up = model.surfaces.price(model.xi, p.tau, k + dk);
        const double dn = model.surfaces.price(model.xi, p.tau, k - dk);
        const double dc_dk = (up - dn) / (2.0 * dk);
        const double put = p.kind == Instrument::put ? 1.0 : 0.0;
        out.d_spot += p.quantity * df * f * (c - dc_dk - put);
        out.d_xi += p.quantity * s * df * f * pt.g;
    }
    const VectorXd row = model.dyn.sigma.transpose() * out.d_xi;  // (B sigma)^T
    out.c = s * model.dyn.beta * out.d_spot + row.dot(model.corr.p_s_xi);
    out.q = (b_factor(model.corr, nullptr).transpose() * row).norm();
    return out;
}

double closed_var(const AffineModel& model, const Portfolio& portfolio, double theta, double h,
                  const ClosedOptions& options) {
    check_level(theta, h);
    const auto e = exposure(model, portfolio, options.dk);
    if (options.law == SpotLaw::tstudent) {
        if (!(options.nu > 2.0)) throw DomainError("t law needs nu > 2");
        shortterm::ShortTermParams params;
        params.rho = 0.0;
        params.nu = options.nu;
        params.theta = theta;
        params.h = h;
        // The law of q X + c Y is even in c and in q.
        return shortterm::tstudent_var({std::abs(e.c), std::abs(e.q)}, params, options.n_draws, options.seed);
    }
    return norm_inv(1.0 - theta) * std::hypot(e.c, e.q) * std::sqrt(h);
}

double closed_var_one_factor(const AffineModel& model, double d_spot, double d_xi, double theta, double h) {
    check_level(theta, h);
    model.validate();
    if (model.dim() != 1) throw DomainError("the one-factor expression needs d = 1");
    const double s = model.spot(), beta = model.dyn.beta;
    const double sigma = model.dyn.sigma(0, 0), p = model.corr.p_s_xi[0];
    const double x = s * beta * d_spot, y = sigma * d_xi;
    return norm_inv(1.0 - theta) * std::sqrt(x * x + y * y + 2.0 * p * x * y) * std::sqrt(h);
}

namespace {

struct Node {
    double weight;
    double a_hat;
    double spread;  // |B_hat|
};

std::vector<Node> quasi_nodes(const PnlCoeffs& pnl, double h, std::size_t n, SpotLaw law) {
    const auto& rule = gauss_hermite_normal(n);
    std::vector<Node> nodes(n);
    parallel_for(n, [&](std::size_t i) {
        const double s = spot_of(pnl.model(), h, rule.nodes[i], law);
        const auto pt = pnl(h, s);
        nodes[i] = {rule.weights[i], pt.a_hat, pt.b_hat.norm()};
    });
    return nodes;
}

double probability(const std::vector<Node>& nodes, double v) {
    double p = 0.0;
    for (const auto& nd : nodes) {
        if (nd.spread > 0.0)
            p += nd.weight * norm_cdf((v - nd.a_hat) / nd.spread);
        else if (v >= nd.a_hat)
            p += nd.weight;
    }
    return p;
}

}  // namespace

QuasiResult quasi_explicit_var(const AffineModel& model, const Portfolio& portfolio, double theta, double h,
                               const QuasiOptions& options) {
    check_level(theta, h);
    if (options.law == SpotLaw::tstudent) throw DomainError("quasi-explicit VaR supports the lognormal and normal laws");
    if (options.nodes < 2) throw DomainError("quasi-explicit VaR needs at least two nodes");
    const PnlCoeffs pnl(model, portfolio, options.law);
    const double target = 1.0 - theta;

    const auto e = exposure(model, portfolio);
    double seed = norm_inv(target) * std::hypot(e.c, e.q) * std::sqrt(h);
    if (!std::isfinite(seed)) seed = 0.0;
    std::size_t n = options.nodes;
    auto nodes = quasi_nodes(pnl, h, n, options.law);
    double scale = 0.0;
    for (const auto& nd : nodes) scale = std::max(scale, std::abs(nd.a_hat) + 3.0 * nd.spread);
    if (scale == 0.0) return {0.0, n, 0.0, false};
    const double xtol = 1e-13 * std::max(std::abs(seed), scale);

    double gap = 0.0;
    for (;;) {
        const auto f = [&](double v) { return probability(nodes, v) - target; };
        const auto br = expand_bracket(f, seed, std::max(0.5 * std::abs(seed), 1e-3 * scale), 60);
        const double v = brent(f, br.lo, br.hi, xtol);
        const auto finer = quasi_nodes(pnl, h, 2 * n, options.law);
        gap = std::abs(probability(finer, v) - probability(nodes, v));
        if (gap <= options.tol) return {v, n, gap, false};
        seed = v;
        if (2 * n > options.max_nodes) break;
        n *= 2;
        nodes = finer;
    }

    // Sharp transitions in y (|B_hat| small against the spread of A_hat):
    // adaptive Gauss-Legendre on the standardized shock instead.
    double last_error = 0.0;
    bool converged = true;
    const auto g = [&](double v) {
        const auto res = integrate_adaptive(
            [&](double y) {
                const auto pt = pnl(h, spot_of(model, h, y, options.law));
                const double spread = pt.b_hat.norm();
                const double p = spread > 0.0 ? norm_cdf((v - pt.a_hat) / spread) : (v >= pt.a_hat ? 1.0 : 0.0);
                return norm_pdf(y) * p;
            },
            -10.0, 10.0, 0.25 * options.tol, 0.0);
        last_error = res.error;
        converged = converged && res.converged;
        return res.value - target;
    };
    const auto br = expand_bracket(g, seed, std::max(0.05 * std::abs(seed), 1e-4 * scale), 60);
    const double v = brent(g, br.lo, br.hi, xtol);
    g(v);
    if (!converged || last_error > options.tol) {
        std::ostringstream msg;
        msg << "quasi-explicit VaR: probability at v = " << v << " did not converge (Gauss-Hermite gap " << gap
            << " at " << n << " nodes, adaptive error " << last_error << ", tolerance " << options.tol << ")";
        throw NumericalError(msg.str());
    }
    return {v, 0, last_error, true};
}

OneStep simulate_one_step(const AffineModel& model, double h, std::size_t n, std::uint64_t seed, SpotLaw law,
                          double nu) {
    model.validate();
    if (!(h >= 0.0)) throw DomainError("margin period must be non-negative");
    if (law == SpotLaw::tstudent && !(nu > 2.0)) throw DomainError("t law needs nu > 2");
    const auto d = static_cast<Eigen::Index>(model.dim());
    const MatrixXd sigma_b = model.dyn.sigma * b_factor(model.corr, nullptr);
    const VectorXd sigma_p = model.dyn.sigma * model.corr.p_s_xi;
    const double root_h = std::sqrt(h);
    const double t_scale = law == SpotLaw::tstudent ? std::sqrt((nu - 2.0) / nu) : 1.0;
    const boost::math::students_t_distribution<double> tdist(law == SpotLaw::tstudent ? nu : 3.0);

    OneStep out;
    out.spot.resize(n);
    out.dxi.resize(static_cast<Eigen::Index>(n), d);
    constexpr std::size_t block = 4096;
    const std::size_t blocks = (n + block - 1) / block;
    parallel_for(blocks, [&](std::size_t b) {
        Rng rng(seed, b);
        VectorXd z(d);
        const std::size_t end = std::min(n, (b + 1) * block);
        for (std::size_t i = b * block; i < end; ++i) {
            const double y = law == SpotLaw::tstudent ? t_scale * boost::math::quantile(tdist, rng.uniform())
                                                      : rng.normal();
            for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
            out.spot[i] = spot_of(model, h, y, law);
            out.dxi.row(static_cast<Eigen::Index>(i)) =
                (model.dyn.mu * h + root_h * (y * sigma_p + sigma_b * z)).transpose();
        }
    });
    return out;
}

EmpiricalResult empirical_var(const AffineModel& model, const Portfolio& portfolio, double theta, double h,
                              const EmpiricalOptions& options) {
    check_level(theta, h);
    if (options.n_sims < 1000) throw DomainError("empirical VaR needs at least 1000 simulations");
    const PnlCoeffs pnl(model, portfolio, options.law);
    const auto draws = simulate_one_step(model, h, options.n_sims, options.seed, options.law, options.nu);

    EmpiricalResult out;
    const std::size_t n = options.n_sims;
    out.pnl.resize(n);
    constexpr std::size_t block = 4096;
    const std::size_t blocks = (n + block - 1) / block;
    std::vector<std::size_t> breaks(blocks, 0);
    parallel_for(blocks, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * block);
        for (std::size_t i = b * block; i < end; ++i) {
            const VectorXd xi = model.xi + draws.dxi.row(static_cast<Eigen::Index>(i)).transpose();
            out.pnl[i] = pnl.value_at(h, draws.spot[i], xi, &breaks[b]) - pnl.value();
        }
    });
    for (auto c : breaks) out.bound_breaks += c;

    std::vector<double> sorted = out.pnl;
    std::sort(sorted.begin(), sorted.end());
    const double p = 1.0 - theta;
    out.var = quantile_sorted(sorted, p);
    // Sparsity estimate with the Hall-Sheather bandwidth.
    const double nn = static_cast<double>(n);
    const double z = norm_inv(p), za = norm_inv(0.975);
    const double phi = norm_pdf(z);
    const double bw = std::pow(nn, -1.0 / 3.0) * std::pow(za, 2.0 / 3.0) *
                      std::pow(1.5 * phi * phi / (2.0 * z * z + 1.0), 1.0 / 3.0);
    const double lo = std::max(p - bw, 0.0), hi = std::min(p + bw, 1.0);
    const double sparsity = (quantile_sorted(sorted, hi) - quantile_sorted(sorted, lo)) / (hi - lo);
    out.std_error = sparsity * std::sqrt(p * (1.0 - p) / nn);
    return out;
}

}  // namespace imargin::affine
