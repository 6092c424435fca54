#pragma once

#include <functional>

namespace imargin {

struct Bracket {
    double lo;
    double hi;
};

// Brent's method on [lo, hi]; f(lo) and f(hi) must differ in sign (or one
// of them vanish). Throws NumericalError otherwise or on non-convergence.
double brent(const std::function<double(double)>& f, double lo, double hi, double xtol,
             int max_iter = 200);

// Widens [center - step, center + step] geometrically (doubling the step)
// until f changes sign. Throws NumericalError after max_expansions.
Bracket expand_bracket(const std::function<double(double)>& f, double center, double step,
                       int max_expansions = 60);

}  // namespace imargin
