#pragma once

namespace imargin {

double norm_pdf(double x);
double norm_cdf(double x);
// Inverse of norm_cdf on (0,1); +-infinity at the end points.
double norm_inv(double p);

}  // namespace imargin
