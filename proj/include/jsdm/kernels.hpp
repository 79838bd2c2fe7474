#pragma once

#include "jsdm/linalg.hpp"

#include <cstddef>
#include <span>

namespace jsdm {

// Planar coordinates in meters (east, north).
struct Location {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Location& a, const Location& b);

struct StationaryKernelParams {
  double length_scale = 1.0;  // meters, > 0
  double variance = 1.0;      // >= 0
};

// sigma^2 exp(-|s - s'| / l)
double exp_cov(const Location& s, const Location& t, const StationaryKernelParams& p);

// Stationary Matern 3/2 with unit variance: (1 + sqrt3 d/l) exp(-sqrt3 d/l).
double matern32_cov(double dist, double length_scale);

// Non-stationary Matern 3/2 with isotropic local length scales l_s and l_t
// (Sigma = l^2 I in the plane).  Unit marginal variance.  Closed form of the
// determinant expression:
//   prefactor = l_s l_t / ((l_s^2 + l_t^2) / 2)
//   Q         = |s - t|^2 / ((l_s^2 + l_t^2) / 2)
//   k         = prefactor (1 + sqrt3 sqrt Q) exp(-sqrt3 sqrt Q)
double matern32_nonstat_cov(const Location& s, const Location& t, double l_s, double l_t);

// Same kernel, given the distance directly (hot loops).
double matern32_nonstat_from_distance(double dist, double l_s, double l_t);

// Partial derivatives of the non-stationary kernel with respect to log l_s
// and log l_t at a given distance.
struct NonstatDerivs {
  double value;
  double d_log_ls;
  double d_log_lt;
};
NonstatDerivs matern32_nonstat_derivs(double dist, double l_s, double l_t);

struct CovarianceMatrix {
  Matrix k;           // kernel values, without jitter
  Matrix lower;       // Cholesky factor of k + jitter I
  double jitter = 0;  // absolute diagonal jitter used
};

// Assemble K[i][j] = kernel(i, j) over n points (lower triangle evaluated,
// mirrored to the upper triangle).
template <typename Kernel>
Matrix assemble_cov(std::size_t n, Kernel&& kernel) {
  Matrix k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  // column-major: walk down each column of the lower triangle
  for (Eigen::Index j = 0; j < k.cols(); ++j)
    for (Eigen::Index i = j; i < k.rows(); ++i)
      k(i, j) = kernel(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  k.template triangularView<Eigen::StrictlyUpper>() = k.transpose();
  return k;
}

// Cross-covariance between two location sets.
template <typename Kernel>
Matrix assemble_cross_cov(std::size_t rows, std::size_t cols, Kernel&& kernel) {
  Matrix k(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < k.cols(); ++j)
    for (Eigen::Index i = 0; i < k.rows(); ++i)
      k(i, j) = kernel(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  return k;
}

// Build and factor a covariance matrix over `locs` with a location kernel
// k(Location, Location).  Throws DomainError on non-finite coordinates and
// NumericalError if the factorization fails after jitter escalation.
template <typename Kernel>
CovarianceMatrix build_cov_matrix(std::span<const Location> locs, Kernel&& kernel,
                                  double rel_jitter = 1e-8);

// Pairwise Euclidean distance matrix.
Matrix distance_matrix(std::span<const Location> a, std::span<const Location> b);
Matrix distance_matrix(std::span<const Location> a);

void check_finite(std::span<const Location> locs);

template <typename Kernel>
CovarianceMatrix build_cov_matrix(std::span<const Location> locs, Kernel&& kernel,
                                  double rel_jitter) {
  check_finite(locs);
  CovarianceMatrix out;
  out.k = assemble_cov(locs.size(), [&](std::size_t i, std::size_t j) {
    return kernel(locs[i], locs[j]);
  });
  auto chol = cholesky_with_jitter(out.k, rel_jitter, 4, "kernel matrix");
  out.lower = std::move(chol.lower);
  out.jitter = chol.jitter;
  return out;
}

}  // namespace jsdm
