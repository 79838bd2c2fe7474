#include "jsdm/kernels.hpp"

#include "jsdm/errors.hpp"

#include <cmath>
#include <numbers>

namespace jsdm {

namespace {
constexpr double kSqrt3 = std::numbers::sqrt3;

void require_finite(const Location& s) {
  if (!std::isfinite(s.x) || !std::isfinite(s.y))
    throw DomainError("location has non-finite coordinates");
}
}  // namespace

double distance(const Location& a, const Location& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void check_finite(std::span<const Location> locs) {
  for (const auto& s : locs) require_finite(s);
}

double exp_cov(const Location& s, const Location& t, const StationaryKernelParams& p) {
  require_finite(s);
  require_finite(t);
  if (!(p.length_scale > 0.0) || !(p.variance >= 0.0))
    throw DomainError("exp_cov: need length_scale > 0 and variance >= 0");
  return p.variance * std::exp(-distance(s, t) / p.length_scale);
}

double matern32_cov(double dist, double length_scale) {
  const double r = kSqrt3 * dist / length_scale;
  return (1.0 + r) * std::exp(-r);
}

double matern32_nonstat_from_distance(double dist, double l_s, double l_t) {
  const double half_sum = 0.5 * (l_s * l_s + l_t * l_t);
  const double prefactor = l_s * l_t / half_sum;
  const double r = kSqrt3 * std::sqrt(dist * dist / half_sum);
  return prefactor * (1.0 + r) * std::exp(-r);
}

double matern32_nonstat_cov(const Location& s, const Location& t, double l_s, double l_t) {
  require_finite(s);
  require_finite(t);
  if (!(l_s > 0.0) || !(l_t > 0.0))
    throw DomainError("matern32_nonstat_cov: length scales must be positive");
  return matern32_nonstat_from_distance(distance(s, t), l_s, l_t);
}

NonstatDerivs matern32_nonstat_derivs(double dist, double l_s, double l_t) {
  const double ls2 = l_s * l_s;
  const double lt2 = l_t * l_t;
  const double sum = ls2 + lt2;
  const double prefactor = 2.0 * l_s * l_t / sum;
  const double q = 2.0 * dist * dist / sum;
  const double r = kSqrt3 * std::sqrt(q);
  const double e = std::exp(-r);
  const double value = prefactor * (1.0 + r) * e;
  // d log(prefactor) / d log l_s = (l_t^2 - l_s^2) / sum
  // d r / d log l_s = -r l_s^2 / sum;  dM/dr = -r e^{-r}
  const double tail = prefactor * r * r * e / sum;
  NonstatDerivs out;
  out.value = value;
  out.d_log_ls = value * (lt2 - ls2) / sum + tail * ls2;
  out.d_log_lt = value * (ls2 - lt2) / sum + tail * lt2;
  return out;
}

Matrix distance_matrix(std::span<const Location> a, std::span<const Location> b) {
  check_finite(a);
  check_finite(b);
  return assemble_cross_cov(a.size(), b.size(),
                            [&](std::size_t i, std::size_t j) { return distance(a[i], b[j]); });
}

Matrix distance_matrix(std::span<const Location> a) {
  check_finite(a);
  return assemble_cov(a.size(), [&](std::size_t i, std::size_t j) { return distance(a[i], a[j]); });
}

}  // namespace jsdm
