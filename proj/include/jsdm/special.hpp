#pragma once

namespace jsdm {

// Thin wrappers over Boost.Math so call sites stay independent of it.
double log_gamma(double x);
double digamma(double x);

// lgamma(x + k) - lgamma(x) and digamma(x + k) - digamma(x) for integer k >= 0.
double log_rising(double x, int k);
double digamma_rising(double x, int k);

// log(sum(exp(v))) with max subtraction.
double log_sum_exp(const double* v, int n);

}  // namespace jsdm
