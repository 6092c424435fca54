#include "imargin/roots.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "imargin/errors.hpp"

namespace imargin {

double brent(const std::function<double(double)>& f, double lo, double hi, double xtol,
             int max_iter) {
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0)) throw NumericalError("brent: root not bracketed");

    double c = a, fc = fa, d = b - a, e = d;
    for (int iter = 0; iter < max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) +
                           0.5 * xtol;
        const double m = 0.5 * (c - b);
        if (std::abs(m) <= tol || fb == 0.0) return b;
        if (std::abs(e) >= tol && std::abs(fa) > std::abs(fb)) {
            double p, q, r;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                q = fa / fc;
                r = fb / fc;
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0)
                q = -q;
            else
                p = -p;
            if (2.0 * p < std::min(3.0 * m * q - std::abs(tol * q), std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol ? d : (m > 0.0 ? tol : -tol);
        fb = f(b);
    }
    throw NumericalError("brent: maximum iterations exceeded");
}

Bracket expand_bracket(const std::function<double(double)>& f, double center, double step,
                       int max_expansions) {
    if (!(step > 0.0) || !std::isfinite(step)) step = 1.0;
    for (int i = 0; i <= max_expansions; ++i) {
        const double lo = center - step, hi = center + step;
        const double flo = f(lo), fhi = f(hi);
        if ((flo <= 0.0 && fhi >= 0.0) || (flo >= 0.0 && fhi <= 0.0)) return {lo, hi};
        step *= 2.0;
    }
    std::ostringstream msg;
    msg << "bracket expansion failed around " << center << " after " << max_expansions
        << " expansions (last half-width " << step / 2.0 << ")";
    throw NumericalError(msg.str());
}

}  // namespace imargin
