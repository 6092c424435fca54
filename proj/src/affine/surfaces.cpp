#include "imargin/affine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include <boost/math/interpolators/barycentric_rational.hpp>

#include "imargin/blackscholes.hpp"
#include "imargin/errors.hpp"
#include "imargin/estimators.hpp"
#include "imargin/stats.hpp"

namespace imargin::affine {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Extension e) {
    return e == Extension::interpolate ? "interpolate" : "regression";
}

namespace {

// One maturity column: node values of G_0, G_1..G_d and their interpolants.
struct Column {
    std::vector<double> ks;
    std::vector<std::vector<double>> values;  // [surface][node]
    std::vector<boost::math::barycentric_rational<double>> interp;

    double eval(std::size_t surface, double k, bool& extrapolated) const {
        const auto& v = values[surface];
        if (k <= ks.front()) {
            extrapolated = extrapolated || k < ks.front();
            return v.front();
        }
        if (k >= ks.back()) {
            extrapolated = extrapolated || k > ks.back();
            return v.back();
        }
        const auto it = std::lower_bound(ks.begin(), ks.end(), k);
        if (*it == k) return v[static_cast<std::size_t>(it - ks.begin())];
        return interp[surface](k);
    }
};

}  // namespace

struct FactorSurfaces::Impl {
    market::Lattice lattice;
    VectorXd g0;
    MatrixXd g;
    MatrixXd xi_history;
    MatrixXd price_history;
    Extension extension = Extension::interpolate;

    std::vector<Column> columns;
    std::vector<market::SurfaceGrid> days;  // regression: one surface per historical day
    MatrixXd weights;                       // regression: (d + 1) x days

    std::size_t dim() const { return static_cast<std::size_t>(g.cols()); }

    double node_value(std::size_t surface, std::size_t node) const {
        return surface == 0 ? g0[static_cast<Eigen::Index>(node)]
                            : g(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(surface - 1));
    }

    void build_columns() {
        const std::size_t surfaces = dim() + 1;
        columns.resize(lattice.taus.size());
        for (std::size_t j = 0; j < lattice.taus.size(); ++j) {
            auto& col = columns[j];
            col.ks = lattice.ks[j];
            col.values.assign(surfaces, {});
            for (std::size_t s = 0; s < surfaces; ++s) {
                for (std::size_t m = 0; m < col.ks.size(); ++m)
                    col.values[s].push_back(node_value(s, lattice.flat(j, m)));
                if (col.ks.size() >= 2) {
                    const std::size_t order = std::min<std::size_t>(3, col.ks.size() - 1);
                    col.interp.emplace_back(col.ks.data(), col.values[s].data(), col.ks.size(), order);
                }
            }
        }
    }

    void build_regression() {
        const auto n_days = static_cast<std::size_t>(price_history.rows());
        if (static_cast<std::size_t>(xi_history.rows()) != n_days)
            throw DomainError("affine: factor and price histories differ in length");
        if (n_days < dim() + 1) throw InsufficientData("affine: regression needs more days than factors");
        days.reserve(n_days);
        const auto term = market::TermStructure::flat(1.0);
        for (std::size_t d = 0; d < n_days; ++d) {
            std::vector<std::vector<double>> vols(lattice.taus.size());
            for (std::size_t j = 0; j < lattice.taus.size(); ++j)
                for (std::size_t m = 0; m < lattice.ks[j].size(); ++m) {
                    const double c = price_history(static_cast<Eigen::Index>(d),
                                                   static_cast<Eigen::Index>(lattice.flat(j, m)));
                    try {
                        vols[j].push_back(bs::implied_vol_normalized(c, lattice.ks[j][m], lattice.taus[j]));
                    } catch (const BoundViolation&) {
                        std::ostringstream msg;
                        msg << "affine: historical price on day " << d << " at node " << lattice.flat(j, m)
                            << " is outside the no-arbitrage bounds";
                        throw DomainError(msg.str());
                    }
                }
            days.emplace_back(lattice, std::move(vols), term);
        }
        MatrixXd x(static_cast<Eigen::Index>(n_days), static_cast<Eigen::Index>(dim() + 1));
        x.col(0).setOnes();
        x.rightCols(static_cast<Eigen::Index>(dim())) = xi_history;
        weights = x.completeOrthogonalDecomposition().pseudoInverse();
    }

    // Exact lattice node, if (tau, k) is one.
    std::optional<std::size_t> node_at(double tau, double k) const {
        const auto& ts = lattice.taus;
        const auto jt = std::find(ts.begin(), ts.end(), tau);
        if (jt == ts.end()) return std::nullopt;
        const auto j = static_cast<std::size_t>(jt - ts.begin());
        const auto& ks = lattice.ks[j];
        const auto mt = std::find(ks.begin(), ks.end(), k);
        if (mt == ks.end()) return std::nullopt;
        return lattice.flat(j, static_cast<std::size_t>(mt - ks.begin()));
    }

    Point at(double tau, double k) const {
        Point p;
        p.g.resize(static_cast<Eigen::Index>(dim()));
        if (const auto node = node_at(tau, k)) {
            p.g0 = g0[static_cast<Eigen::Index>(*node)];
            p.g = g.row(static_cast<Eigen::Index>(*node)).transpose();
            return p;
        }
        const auto& ts = lattice.taus;
        std::size_t j0 = 0, j1 = 0;
        double lam = 0.0;
        if (tau <= ts.front()) {
            p.extrapolated = tau < ts.front();
        } else if (tau >= ts.back()) {
            j0 = j1 = ts.size() - 1;
            p.extrapolated = tau > ts.back();
        } else {
            j0 = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), tau) - ts.begin()) - 1;
            j1 = tau == ts[j0] ? j0 : j0 + 1;
            if (j1 != j0) lam = (tau - ts[j0]) / (ts[j1] - ts[j0]);
        }
        for (std::size_t j : {j0, j1}) {
            const auto& ks = lattice.ks[j];
            if (k < ks.front() || k > ks.back()) p.extrapolated = true;
        }
        if (extension == Extension::regression) {
            VectorXd prices(static_cast<Eigen::Index>(days.size()));
            for (std::size_t d = 0; d < days.size(); ++d)
                prices[static_cast<Eigen::Index>(d)] = days[d].normalized_call(tau, k);
            const VectorXd coef = weights * prices;
            p.g0 = coef[0];
            p.g = coef.tail(static_cast<Eigen::Index>(dim()));
            return p;
        }
        bool flag = false;
        for (std::size_t s = 0; s <= dim(); ++s) {
            double v = columns[j0].eval(s, k, flag);
            if (j1 != j0) v = (1.0 - lam) * v + lam * columns[j1].eval(s, k, flag);
            if (s == 0)
                p.g0 = v;
            else
                p.g[static_cast<Eigen::Index>(s - 1)] = v;
        }
        return p;
    }
};

namespace {

void check_shapes(const market::Lattice& lattice, const VectorXd& g0, const MatrixXd& g) {
    const auto nodes = static_cast<Eigen::Index>(lattice.node_count());
    if (lattice.taus.empty() || nodes == 0) throw DomainError("affine: empty lattice");
    if (lattice.ks.size() != lattice.taus.size()) throw DomainError("affine: lattice has ragged maturities");
    if (g0.size() != nodes) throw DomainError("affine: G_0 needs one value per lattice node");
    if (g.rows() != nodes) throw DomainError("affine: G needs one row per lattice node");
}

}  // namespace

FactorSurfaces::FactorSurfaces(market::Lattice lattice, VectorXd g0, MatrixXd g) {
    check_shapes(lattice, g0, g);
    auto impl = std::make_shared<Impl>();
    impl->lattice = std::move(lattice);
    impl->g0 = std::move(g0);
    impl->g = std::move(g);
    impl->extension = Extension::interpolate;
    impl->xi_history = MatrixXd(0, impl->g.cols());
    impl->price_history = MatrixXd(0, impl->g.rows());
    impl->build_columns();
    impl_ = std::move(impl);
}

FactorSurfaces::FactorSurfaces(market::Lattice lattice, VectorXd g0, MatrixXd g, MatrixXd xi_history,
                               MatrixXd price_history, Extension extension) {
    check_shapes(lattice, g0, g);
    if (xi_history.cols() != g.cols()) throw DomainError("affine: factor history has the wrong width");
    if (price_history.rows() != 0 && price_history.cols() != g.rows())
        throw DomainError("affine: price history needs one column per lattice node");
    auto impl = std::make_shared<Impl>();
    impl->lattice = std::move(lattice);
    impl->g0 = std::move(g0);
    impl->g = std::move(g);
    impl->xi_history = std::move(xi_history);
    impl->price_history = std::move(price_history);
    impl->extension = extension;
    impl->build_columns();
    if (extension == Extension::regression) {
        if (impl->price_history.rows() == 0)
            throw DomainError("affine: the regression extension needs the price history");
        impl->build_regression();
    }
    impl_ = std::move(impl);
}

const FactorSurfaces::Impl& FactorSurfaces::impl() const {
    if (!impl_) throw DomainError("affine: factor surfaces are not set");
    return *impl_;
}

std::size_t FactorSurfaces::dim() const { return impl_ ? impl_->dim() : 0; }
const market::Lattice& FactorSurfaces::lattice() const { return impl().lattice; }
const VectorXd& FactorSurfaces::g0() const { return impl().g0; }
const MatrixXd& FactorSurfaces::g() const { return impl().g; }
const MatrixXd& FactorSurfaces::xi_history() const { return impl().xi_history; }
const MatrixXd& FactorSurfaces::price_history() const { return impl().price_history; }
Extension FactorSurfaces::extension() const { return impl().extension; }

FactorSurfaces::Point FactorSurfaces::at(double tau, double k) const { return impl().at(tau, k); }

double FactorSurfaces::price(const VectorXd& xi, double tau, double k) const {
    const auto p = at(tau, k);
    if (xi.size() != p.g.size()) throw DomainError("affine: factor vector has the wrong dimension");
    return p.g0 + p.g.dot(xi);
}

bool FactorSurfaces::in_tau_hull(double tau) const {
    const auto& ts = lattice().taus;
    return tau >= ts.front() && tau <= ts.back();
}

double price_surface(const AffineModel& model, const VectorXd& xi, double tau, double k) {
    return model.surfaces.price(xi, tau, k);
}

void AffineModel::validate() const {
    const auto d = static_cast<Eigen::Index>(dim());
    if (xi.size() != d) throw DomainError("affine model: today's factor has the wrong dimension");
    if (dyn.mu.size() != d || dyn.sigma.rows() != d || dyn.sigma.cols() != d)
        throw DomainError("affine model: drift or diffusion has the wrong dimension");
    if (corr.p_s_xi.size() != d || corr.p_xi.rows() != d || corr.p_xi.cols() != d)
        throw DomainError("affine model: correlation blocks have the wrong dimension");
    if (!(dyn.beta >= 0.0) || !std::isfinite(dyn.alpha)) throw DomainError("affine model: beta must be >= 0");
    MatrixXd full(d + 1, d + 1);
    full(0, 0) = 1.0;
    full.block(1, 0, d, 1) = corr.p_s_xi;
    full.block(0, 1, 1, d) = corr.p_s_xi.transpose();
    full.block(1, 1, d, d) = corr.p_xi;
    if ((full - full.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw DomainError("affine model: correlation matrix is not symmetric");
    for (Eigen::Index i = 0; i <= d; ++i)
        if (std::abs(full(i, i) - 1.0) > 1e-12) throw DomainError("affine model: correlation diagonal must be 1");
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(full);
    if (eig.eigenvalues().minCoeff() < -1e-10)
        throw DomainError("affine model: correlation matrix is not positive semi-definite");
}

namespace {

// a . p >= b on one day's node prices p.
struct NodeConstraint {
    std::vector<std::pair<Eigen::Index, double>> terms;
    double b;
    double norm2;
};

// The static no-arbitrage conditions on a lattice, in the strike coordinate
// x = e^k; convexity rows are rescaled to O(1) coefficients.
std::vector<NodeConstraint> lattice_constraints(const market::Lattice& lat) {
    std::vector<NodeConstraint> out;
    auto add = [&](std::vector<std::pair<Eigen::Index, double>> terms, double b) {
        double n2 = 0.0;
        for (const auto& t : terms) n2 += t.second * t.second;
        out.push_back({std::move(terms), b, n2});
    };
    auto node = [&](std::size_t j, std::size_t m) { return static_cast<Eigen::Index>(lat.flat(j, m)); };
    for (std::size_t j = 0; j < lat.taus.size(); ++j) {
        const auto& ks = lat.ks[j];
        for (std::size_t m = 0; m < ks.size(); ++m) {
            add({{node(j, m), 1.0}}, bs::normalized_intrinsic(ks[m]));
            add({{node(j, m), -1.0}}, -1.0);
            if (m + 1 < ks.size()) add({{node(j, m), 1.0}, {node(j, m + 1), -1.0}}, 0.0);
            if (m > 0 && m + 1 < ks.size()) {
                const double x0 = std::exp(ks[m - 1]), x1 = std::exp(ks[m]), x2 = std::exp(ks[m + 1]);
                const double l = 1.0 / (x1 - x0), r = 1.0 / (x2 - x1), sc = 1.0 / (l + r);
                add({{node(j, m - 1), l * sc}, {node(j, m), -(l + r) * sc}, {node(j, m + 1), r * sc}}, 0.0);
            }
            if (j == 0) continue;
            const auto& prev = lat.ks[j - 1];
            const double k = ks[m];
            if (k < prev.front() || k > prev.back()) continue;
            const auto it = std::lower_bound(prev.begin(), prev.end(), k);
            const auto i = static_cast<std::size_t>(it - prev.begin());
            if (*it == k) {
                add({{node(j, m), 1.0}, {node(j - 1, i), -1.0}}, 0.0);
                continue;
            }
            const double x0 = std::exp(prev[i - 1]), x1 = std::exp(prev[i]), w = (std::exp(k) - x0) / (x1 - x0);
            add({{node(j, m), 1.0}, {node(j - 1, i - 1), -(1.0 - w)}, {node(j - 1, i), -w}}, 0.0);
        }
    }
    return out;
}

struct RepairOutcome {
    std::size_t moved = 0;
    std::size_t sweeps = 0;
    bool converged = true;
};

// Nearest (G_0, G) in Frobenius norm such that G_0 + G xi_t satisfies every
// lattice constraint (with a small margin) on every historical day, by
// Hildreth's dual coordinate ascent over the (day, constraint) pairs.
RepairOutcome repair_factors(const market::Lattice& lat, const MatrixXd& xi, VectorXd& g0, MatrixXd& g) {
    constexpr double margin = 1e-9;
    const auto cons = lattice_constraints(lat);
    const Eigen::Index days = xi.rows(), d = g.cols();
    // x = [g0 | g] stacked by node; day t loads node n through w_t = (1, xi_t).
    MatrixXd x(g0.size(), d + 1);
    x.col(0) = g0;
    x.rightCols(d) = g;
    MatrixXd w(days, d + 1);
    w.col(0).setOnes();
    w.rightCols(d) = xi;
    const VectorXd w2 = w.rowwise().squaredNorm();

    auto slack = [&](const NodeConstraint& c, Eigen::Index t) {
        double v = 0.0;
        for (const auto& [n, a] : c.terms) v += a * x.row(n).dot(w.row(t));
        return v - c.b;
    };

    RepairOutcome out;
    // Only pairs violated at some point carry a multiplier.
    std::vector<std::pair<std::size_t, Eigen::Index>> active;
    std::vector<double> lambda;
    std::vector<char> seen(cons.size() * static_cast<std::size_t>(days), 0);
    out.converged = false;
    for (std::size_t sweep = 0; sweep < 20000 && !out.converged; ++sweep) {
        out.sweeps = sweep + 1;
        bool violated = false;
        for (std::size_t i = 0; i < cons.size(); ++i)
            for (Eigen::Index t = 0; t < days; ++t) {
                if (slack(cons[i], t) >= 0.1 * margin) continue;
                violated = true;
                auto& flag = seen[i * static_cast<std::size_t>(days) + static_cast<std::size_t>(t)];
                if (!flag) {
                    flag = 1;
                    active.emplace_back(i, t);
                    lambda.push_back(0.0);
                }
            }
        if (!violated) {
            out.converged = true;
            break;
        }
        out.moved = active.size();
        for (int inner = 0; inner < 50; ++inner)
            for (std::size_t a = 0; a < active.size(); ++a) {
                const auto& c = cons[active[a].first];
                const Eigen::Index t = active[a].second;
                const double gap = margin - slack(c, t);
                const double next = std::max(0.0, lambda[a] + gap / (c.norm2 * w2[t]));
                const double step = next - lambda[a];
                if (step == 0.0) continue;
                lambda[a] = next;
                for (const auto& [n, coef] : c.terms) x.row(n) += step * coef * w.row(t);
            }
    }
    g0 = x.col(0);
    g = x.rightCols(d);
    return out;
}

}  // namespace

Calibration calibrate_factors(const market::Lattice& lattice, const MatrixXd& price_history, std::size_t d,
                              Extension extension, bool repair) {
    const Eigen::Index days = price_history.rows(), nodes = price_history.cols();
    if (static_cast<std::size_t>(nodes) != lattice.node_count())
        throw DomainError("affine: price history needs one column per lattice node");
    if (static_cast<std::size_t>(days) <= d) {
        std::ostringstream msg;
        msg << "affine calibration needs more than " << d << " days, got " << days;
        throw InsufficientData(msg.str());
    }
    const auto di = static_cast<Eigen::Index>(d);
    Calibration out;
    const VectorXd g0 = price_history.colwise().mean().transpose();
    const MatrixXd resid = price_history.rowwise() - g0.transpose();
    Eigen::BDCSVD<MatrixXd> svd(resid, Eigen::ComputeThinV);
    out.singular_values = svd.singularValues();
    // Rounding in the centring leaves residuals of order eps |prices|.
    const double scale = price_history.norm();
    const double tol = static_cast<double>(std::max(days, nodes)) * std::numeric_limits<double>::epsilon() * scale;
    Eigen::Index rank = 0;
    while (rank < out.singular_values.size() && out.singular_values[rank] > tol) ++rank;
    if (di > rank) {
        std::ostringstream msg;
        msg << "affine calibration: " << d << " factors requested but the residuals have rank " << rank;
        throw DomainError(msg.str());
    }
    MatrixXd g = svd.matrixV().leftCols(di);
    for (Eigen::Index i = 0; i < di; ++i) {
        const double scale = g.col(i).cwiseAbs().maxCoeff();
        for (Eigen::Index r = 0; r < nodes; ++r) {
            if (std::abs(g(r, i)) > 1e-12 * scale) {
                if (g(r, i) < 0.0) g.col(i) *= -1.0;
                break;
            }
        }
    }
    out.xi_history = resid * g;
    VectorXd g0_fit = g0;
    if (repair && di > 0) {
        const auto fixed = repair_factors(lattice, out.xi_history, g0_fit, g);
        out.repaired_constraints = fixed.moved;
        if (!fixed.converged) {
            std::ostringstream msg;
            msg << "affine calibration: static-arbitrage repair stopped after " << fixed.sweeps
                << " sweeps with violations left";
            out.warnings.push_back(msg.str());
        }
    }
    const MatrixXd recon = (out.xi_history * g.transpose()).rowwise() + g0_fit.transpose();
    double sum = 0.0;
    std::size_t count = 0;
    for (Eigen::Index r = 0; r < days; ++r)
        for (Eigen::Index c = 0; c < nodes; ++c) {
            const double x = price_history(r, c);
            if (x == 0.0) continue;
            sum += std::abs(recon(r, c) - x) / std::abs(x);
            ++count;
        }
    out.mape = count ? sum / static_cast<double>(count) : 0.0;
    out.surfaces = FactorSurfaces(lattice, g0_fit, g, out.xi_history, price_history, extension);
    return out;
}

std::size_t history_arbitrage_violations(const FactorSurfaces& surfaces) {
    const auto& lat = surfaces.lattice();
    const auto& xi = surfaces.xi_history();
    std::size_t total = 0;
    for (Eigen::Index d = 0; d < xi.rows(); ++d) {
        const VectorXd row = surfaces.g0() + surfaces.g() * xi.row(d).transpose();
        std::vector<std::vector<double>> prices(lat.taus.size());
        for (std::size_t j = 0; j < lat.taus.size(); ++j)
            for (std::size_t m = 0; m < lat.ks[j].size(); ++m)
                prices[j].push_back(row[static_cast<Eigen::Index>(lat.flat(j, m))]);
        total += market::static_arbitrage_report(lat, prices).violations.size();
    }
    return total;
}

MatrixXd nearest_correlation(const MatrixXd& a, double tol, int max_iter) {
    if (a.rows() != a.cols()) throw DomainError("nearest_correlation: matrix must be square");
    const auto psd = [](const MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
        const VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
        return MatrixXd(eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose());
    };
    MatrixXd y = 0.5 * (a + a.transpose());
    y.diagonal().setOnes();
    MatrixXd correction = MatrixXd::Zero(a.rows(), a.cols());
    for (int it = 0; it < max_iter; ++it) {
        const MatrixXd r = y - correction;
        const MatrixXd x = psd(r);
        correction = x - r;
        MatrixXd next = x;
        next.diagonal().setOnes();
        const double change = (next - y).norm();
        y = next;
        if (change <= tol * std::max(1.0, y.norm())) break;
    }
    return 0.5 * (y + y.transpose());
}

namespace {

// Symmetric square root with negative eigenvalues clipped.
MatrixXd sym_sqrt(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
    const VectorXd lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

double correlation(const VectorXd& a, const VectorXd& b) {
    const VectorXd ca = a.array() - a.mean(), cb = b.array() - b.mean();
    const double den = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
    return den > 0.0 ? ca.dot(cb) / den : 0.0;
}

}  // namespace

DynamicsEstimate estimate_dynamics(const std::vector<double>& spot_history, const MatrixXd& xi_history,
                                   double h_r, const DynamicsOptions& options) {
    if (!(h_r > 0.0)) throw DomainError("affine dynamics: sampling step must be positive");
    if (static_cast<Eigen::Index>(spot_history.size()) != xi_history.rows())
        throw DomainError("affine dynamics: spot and factor histories are not aligned");
    if (spot_history.size() < 3) throw InsufficientData("affine dynamics: need at least three observations");
    DynamicsEstimate out;
    const auto n = static_cast<Eigen::Index>(spot_history.size()) - 1;
    const Eigen::Index d = xi_history.cols();
    if (n < 30) {
        std::ostringstream msg;
        msg << "affine dynamics estimated from only " << n << " increments";
        out.warnings.push_back(msg.str());
    }

    VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = spot_history[static_cast<std::size_t>(i)], b = spot_history[static_cast<std::size_t>(i + 1)];
        if (!(a > 0.0) || !(b > 0.0)) throw DomainError("affine dynamics: spot history must be positive");
        r[i] = std::log(b / a);
    }
    est::EwmaConfig cfg;
    cfg.lambda = options.lambda;
    cfg.step = h_r;
    const std::vector<double> rv(r.data(), r.data() + n);
    out.dyn.beta = est::ewma_forecast(rv, cfg);
    out.dyn.alpha = r.mean() / h_r + 0.5 * out.dyn.beta * out.dyn.beta;

    const MatrixXd dxi = xi_history.bottomRows(n) - xi_history.topRows(n);
    out.dyn.mu = dxi.colwise().mean().transpose() / h_r;
    const MatrixXd centred = dxi.rowwise() - dxi.colwise().mean();
    const MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1) / h_r;
    out.dyn.sigma = sym_sqrt(cov);

    // Whitened increments: eigen-directions with variance get unit variance,
    // the others are dropped.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (cov + cov.transpose()));
    const VectorXd lam = eig.eigenvalues();
    const double top = d ? lam.cwiseAbs().maxCoeff() : 0.0;
    VectorXd inv_sqrt = VectorXd::Zero(d);
    Eigen::Index dropped = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (top > 0.0 && lam[i] > 1e-12 * top)
            inv_sqrt[i] = 1.0 / std::sqrt(lam[i]);
        else
            ++dropped;
    }
    if (dropped) {
        std::ostringstream msg;
        msg << "affine dynamics: singular factor covariance, " << dropped << " direction(s) carry no diffusion";
        out.warnings.push_back(msg.str());
    }
    const MatrixXd whiten = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    const MatrixXd w = centred * whiten;
    out.corr.p_s_xi = VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) out.corr.p_s_xi[i] = correlation(r, w.col(i));
    out.corr.p_xi = MatrixXd::Identity(d, d);
    // Dropped directions leave rank-deficient drivers; keep the identity
    // block and only shrink p_s_xi if the full matrix is not PSD.
    if (out.corr.p_s_xi.norm() > 1.0) {
        MatrixXd full = MatrixXd::Identity(d + 1, d + 1);
        full.block(1, 0, d, 1) = out.corr.p_s_xi;
        full.block(0, 1, 1, d) = out.corr.p_s_xi.transpose();
        full = nearest_correlation(full);
        out.corr.p_s_xi = full.block(1, 0, d, 1);
        out.corr.p_xi = full.block(1, 1, d, d);
        out.warnings.push_back("affine dynamics: correlation matrix projected to the nearest PSD correlation");
    }
    return out;
}

}  // namespace imargin::affine
