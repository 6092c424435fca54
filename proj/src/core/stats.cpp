#include "imargin/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imargin/errors.hpp"

namespace imargin {

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InsufficientData("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level outside [0,1]");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::vector<double> sample, double p) {
    if (sample.empty()) throw InsufficientData("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level outside [0,1]");
    // Selection instead of a full sort: only two order statistics are needed.
    const double h = static_cast<double>(sample.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    auto nth = sample.begin() + static_cast<std::ptrdiff_t>(lo);
    std::nth_element(sample.begin(), nth, sample.end());
    if (lo + 1 >= sample.size()) return *nth;
    const double next = *std::min_element(nth + 1, sample.end());
    return *nth + (h - static_cast<double>(lo)) * (next - *nth);
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw InsufficientData("mean of an empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double acc = 0.0;
    for (double x : xs) acc += (x - m) * (x - m);
    return acc / static_cast<double>(xs.size() - 1);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

}  // namespace imargin
