#include "imargin/affine.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "imargin/csv.hpp"
#include "imargin/errors.hpp"

namespace imargin::affine {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr int kVersion = 1;

void put_values(std::ostream& out, const VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << csv::format_double(v[i]);
}

void put_row(std::ostream& out, const char* tag, Eigen::Index row, const VectorXd& v) {
    out << tag << ',' << row;
    put_values(out, v);
    out << '\n';
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct Reader {
    std::size_t line = 0;

    [[noreturn]] void fail(const std::string& what) const {
        std::ostringstream msg;
        msg << "affine model file line " << line << ": " << what;
        throw ConfigError(msg.str());
    }

    double number(const std::string& text) const {
        try {
            return csv::parse_double(text);
        } catch (const Error&) {
            fail("malformed number '" + text + "'");
        }
    }

    long index(const std::string& text) const {
        try {
            return csv::to_long(text, line, "index");
        } catch (const Error&) {
            fail("malformed index '" + text + "'");
        }
    }

    VectorXd values(const std::vector<std::string>& f, std::size_t from) const {
        VectorXd v(static_cast<Eigen::Index>(f.size() - from));
        for (std::size_t i = from; i < f.size(); ++i) v[static_cast<Eigen::Index>(i - from)] = number(f[i]);
        return v;
    }
};

MatrixXd stack(const std::map<long, VectorXd>& rows, Eigen::Index cols, const Reader& r, const char* tag) {
    MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
    long expect = 0;
    for (const auto& [i, v] : rows) {
        if (i != expect) r.fail(std::string(tag) + " rows must be numbered from 0 without gaps");
        if (v.size() != cols) r.fail(std::string(tag) + " row has the wrong width");
        m.row(i) = v.transpose();
        ++expect;
    }
    return m;
}

}  // namespace

void write_model(std::ostream& out, const AffineModel& model) {
    model.validate();
    const auto& sf = model.surfaces;
    const auto& lat = sf.lattice();
    out << "imargin-affine," << kVersion << '\n';
    out << "extension," << to_string(sf.extension()) << '\n';
    out << "spot," << csv::format_double(model.spot()) << '\n';
    for (const auto& p : model.term.pillars())
        out << "pillar," << csv::format_double(p.tau) << ',' << csv::format_double(p.discount) << ','
            << csv::format_double(p.forward) << '\n';
    for (std::size_t j = 0; j < lat.taus.size(); ++j) {
        out << "column," << csv::format_double(lat.taus[j]);
        for (double k : lat.ks[j]) out << ',' << csv::format_double(k);
        out << '\n';
    }
    out << "g0";
    put_values(out, sf.g0());
    out << '\n';
    for (Eigen::Index i = 0; i < sf.g().cols(); ++i) put_row(out, "g", i, sf.g().col(i));
    out << "xi";
    put_values(out, model.xi);
    out << "\nalpha," << csv::format_double(model.dyn.alpha) << '\n';
    out << "beta," << csv::format_double(model.dyn.beta) << '\n';
    out << "mu";
    put_values(out, model.dyn.mu);
    out << '\n';
    for (Eigen::Index i = 0; i < model.dyn.sigma.rows(); ++i) put_row(out, "sigma", i, model.dyn.sigma.row(i).transpose());
    out << "p_s_xi";
    put_values(out, model.corr.p_s_xi);
    out << '\n';
    for (Eigen::Index i = 0; i < model.corr.p_xi.rows(); ++i) put_row(out, "p_xi", i, model.corr.p_xi.row(i).transpose());
    for (Eigen::Index i = 0; i < sf.xi_history().rows(); ++i) put_row(out, "xi_history", i, sf.xi_history().row(i).transpose());
    for (Eigen::Index i = 0; i < sf.price_history().rows(); ++i)
        put_row(out, "price_history", i, sf.price_history().row(i).transpose());
}

AffineModel read_model(std::istream& in) {
    Reader r;
    std::string text;
    bool header = false;
    std::string extension;
    double spot = 0.0;
    bool have_spot = false;
    std::vector<market::Pillar> pillars;
    market::Lattice lat;
    VectorXd g0, xi, mu, p_s_xi;
    double alpha = 0.0, beta = 0.0;
    std::map<long, VectorXd> g, sigma, p_xi, xi_hist, price_hist;
    std::map<std::string, int> seen;

    while (std::getline(in, text)) {
        ++r.line;
        if (!text.empty() && text.back() == '\r') text.pop_back();
        if (text.empty()) continue;
        const auto f = split(text);
        const std::string& tag = f[0];
        if (!header) {
            if (tag != "imargin-affine" || f.size() != 2) r.fail("missing 'imargin-affine,<version>' header");
            if (r.index(f[1]) != kVersion) r.fail("unsupported model version " + f[1]);
            header = true;
            continue;
        }
        const bool single = tag == "extension" || tag == "spot" || tag == "g0" || tag == "xi" || tag == "alpha" ||
                            tag == "beta" || tag == "mu" || tag == "p_s_xi";
        if (single && seen[tag]++) r.fail("duplicate '" + tag + "' line");
        auto row_into = [&](std::map<long, VectorXd>& dest) {
            if (f.size() < 2) r.fail("'" + tag + "' needs a row index");
            const long i = r.index(f[1]);
            if (dest.count(i)) r.fail("duplicate '" + tag + "' row " + f[1]);
            dest[i] = r.values(f, 2);
        };
        if (tag == "extension") {
            if (f.size() != 2) r.fail("extension takes one value");
            extension = f[1];
        } else if (tag == "spot") {
            if (f.size() != 2) r.fail("spot takes one value");
            spot = r.number(f[1]);
            have_spot = true;
        } else if (tag == "pillar") {
            if (f.size() != 4) r.fail("pillar takes tau, discount and forward");
            pillars.push_back({r.number(f[1]), r.number(f[2]), r.number(f[3])});
        } else if (tag == "column") {
            if (f.size() < 3) r.fail("column needs a maturity and at least one k");
            lat.taus.push_back(r.number(f[1]));
            const VectorXd ks = r.values(f, 2);
            lat.ks.emplace_back(ks.data(), ks.data() + ks.size());
        } else if (tag == "g0") {
            g0 = r.values(f, 1);
        } else if (tag == "g") {
            row_into(g);
        } else if (tag == "xi") {
            xi = r.values(f, 1);
        } else if (tag == "alpha") {
            if (f.size() != 2) r.fail("alpha takes one value");
            alpha = r.number(f[1]);
        } else if (tag == "beta") {
            if (f.size() != 2) r.fail("beta takes one value");
            beta = r.number(f[1]);
        } else if (tag == "mu") {
            mu = r.values(f, 1);
        } else if (tag == "sigma") {
            row_into(sigma);
        } else if (tag == "p_s_xi") {
            p_s_xi = r.values(f, 1);
        } else if (tag == "p_xi") {
            row_into(p_xi);
        } else if (tag == "xi_history") {
            row_into(xi_hist);
        } else if (tag == "price_history") {
            row_into(price_hist);
        } else {
            r.fail("unknown tag '" + tag + "'");
        }
    }
    if (!header) throw ConfigError("affine model file is empty");
    if (!have_spot) throw ConfigError("affine model file has no spot");
    if (lat.taus.empty()) throw ConfigError("affine model file has no lattice columns");
    const auto nodes = static_cast<Eigen::Index>(lat.node_count());
    const auto d = static_cast<Eigen::Index>(g.size());
    MatrixXd gm(nodes, d);
    {
        const MatrixXd cols = stack(g, nodes, r, "g");
        gm = cols.transpose();
    }
    if (g0.size() != nodes) throw ConfigError("affine model file: g0 needs one value per lattice node");

    AffineModel model;
    try {
        model.term = market::TermStructure(spot, pillars);
        const MatrixXd xh = stack(xi_hist, d, r, "xi_history");
        const MatrixXd ph = stack(price_hist, nodes, r, "price_history");
        if (extension == "interpolate" && xh.rows() == 0 && ph.rows() == 0)
            model.surfaces = FactorSurfaces(lat, g0, gm);
        else if (extension == "interpolate")
            model.surfaces = FactorSurfaces(lat, g0, gm, xh, ph, Extension::interpolate);
        else if (extension == "regression")
            model.surfaces = FactorSurfaces(lat, g0, gm, xh, ph, Extension::regression);
        else
            throw ConfigError("affine model file: unknown extension '" + extension + "'");
        model.xi = xi.size() ? xi : VectorXd(0);
        model.dyn.alpha = alpha;
        model.dyn.beta = beta;
        model.dyn.mu = mu.size() ? mu : VectorXd(0);
        model.dyn.sigma = stack(sigma, d, r, "sigma");
        model.corr.p_s_xi = p_s_xi.size() ? p_s_xi : VectorXd(0);
        model.corr.p_xi = stack(p_xi, d, r, "p_xi");
        model.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("affine model file: ") + e.what());
    }
    return model;
}

}  // namespace imargin::affine
