#include "imargin/portfolio.hpp"

namespace imargin {

Portfolio age(const Portfolio& portfolio, double h) {
    Portfolio out = portfolio;
    for (auto& p : out)
        if (is_option(p.kind)) p.tau -= h;
    return out;
}

Portfolio negate(const Portfolio& portfolio) {
    Portfolio out = portfolio;
    for (auto& p : out) p.quantity = -p.quantity;
    return out;
}

}  // namespace imargin
