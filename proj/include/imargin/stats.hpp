#pragma once

#include <span>
#include <vector>

namespace imargin {

// Type-7 quantile (linear interpolation between order statistics) of an
// ascending sample. p in [0,1].
double quantile_sorted(std::span<const double> sorted, double p);

// Type-7 quantile of an unsorted sample.
double quantile(std::vector<double> sample, double p);

double mean(std::span<const double> xs);
// Unbiased sample variance; zero for fewer than two points.
double sample_variance(std::span<const double> xs);
double median(std::vector<double> xs);

}  // namespace imargin
