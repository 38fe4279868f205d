#pragma once

namespace dnr {

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x);

// Survival function of the chi-square distribution with df degrees of freedom.
double chisq_sf(double x, int df);

// Quantile: smallest x with P(X <= x) >= p. Solved numerically from chisq_sf.
double chisq_quantile(double p, int df);

// Upper tail of the standard normal.
double normal_sf(double z);

}  // namespace dnr
