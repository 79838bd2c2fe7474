#include "jsdm/special.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace jsdm {

namespace {
// Poles and overflow produce NaN / inf instead of exceptions; callers treat
// non-finite values as rejected states.
using Quiet = boost::math::policies::policy<
    boost::math::policies::domain_error<boost::math::policies::ignore_error>,
    boost::math::policies::pole_error<boost::math::policies::ignore_error>,
    boost::math::policies::overflow_error<boost::math::policies::ignore_error>,
    boost::math::policies::evaluation_error<boost::math::policies::ignore_error>>;
}  // namespace

double log_gamma(double x) { return boost::math::lgamma(x, Quiet()); }

double digamma(double x) { return boost::math::digamma(x, Quiet()); }

double log_rising(double x, int k) {
  if (k == 0) return 0.0;
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (k <= 8) {
    double prod = 1.0;
    for (int t = 0; t < k; ++t) prod *= x + t;
    return std::log(prod);
  }
  return log_gamma(x + k) - log_gamma(x);
}

double digamma_rising(double x, int k) {
  if (k == 0) return 0.0;
  if (x == 0.0) return std::numeric_limits<double>::infinity();
  if (k <= 8) {
    double s = 0.0;
    for (int t = 0; t < k; ++t) s += 1.0 / (x + t);
    return s;
  }
  return digamma(x + k) - digamma(x);
}

double log_sum_exp(const double* v, int n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace jsdm
