#pragma once

#include <string>
#include <vector>

namespace imargin {

enum class Instrument { call, put, spot, cash };

// One line of a portfolio. Options carry a strike and the time to expiry
// (years) at the valuation date; spot and cash lines use quantity only.
struct Position {
    Instrument kind = Instrument::call;
    double quantity = 0.0;
    double strike = 0.0;
    double tau = 0.0;
    std::string label;
};

using Portfolio = std::vector<Position>;

inline bool is_option(Instrument kind) {
    return kind == Instrument::call || kind == Instrument::put;
}

inline int omega(Instrument kind) { return kind == Instrument::put ? -1 : 1; }

// The same portfolio h years later: every option's time to expiry shrinks.
Portfolio age(const Portfolio& portfolio, double h);

Portfolio negate(const Portfolio& portfolio);

}  // namespace imargin
