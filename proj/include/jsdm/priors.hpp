#pragma once

#include "jsdm/linalg.hpp"
#include "jsdm/random.hpp"

#include <string>
#include <vector>

namespace jsdm {

// Log density together with its derivative in the argument.
struct LogDensity {
  double value = 0.0;
  double grad = 0.0;
};

LogDensity normal_logpdf(double x, double mu, double sd);

// Location-scale Student-t with scale s (not s^2) and nu degrees of freedom.
LogDensity student_t_logpdf(double x, double mu, double s, double nu);

// Student-t truncated to x >= mu (adds log 2).  Throws DomainError below mu.
LogDensity half_student_t_logpdf(double x, double mu, double s, double nu);

// Density of l when 1/l follows half-Student-t(mu, s, nu); includes the
// Jacobian 1/l^2.  Throws DomainError for l <= 0.
LogDensity inverse_half_student_t_logpdf(double l, double mu, double s, double nu);

// Gamma with shape/rate.  Throws DomainError for x <= 0.
LogDensity gamma_logpdf(double x, double shape, double rate);

enum class PriorFamily { Normal, StudentT, HalfStudentT, InverseHalfStudentT, Gamma };

// A univariate prior.  For normal / Student families `location` and `scale`
// are mu and s; for Gamma they are shape and rate.
struct ScalarPrior {
  PriorFamily family = PriorFamily::Normal;
  double location = 0.0;
  double scale = 1.0;
  double dof = 1.0;

  LogDensity logpdf(double x) const;

  // Log density of u where the constrained value is x = exp(u), including
  // log|dx/du| = u.  Gradient is d/du.
  LogDensity logpdf_log_scale(double u) const;

  void validate(const std::string& what) const;
  double sample(Rng& rng) const;  // constrained-scale draw
};

std::string to_string(PriorFamily f);
PriorFamily prior_family_from_string(const std::string& s);

// Prior hyperparameters for every parameter family in the model.
struct PriorConfig {
  // Stationary kernel length scale: 1/l ~ half-t(0, 0.19^2, 5).
  ScalarPrior length_scale{PriorFamily::InverseHalfStudentT, 0.0, 0.19, 5.0};
  // Mean of the log length-scale field: N(4.5, sqrt(2)^2).
  ScalarPrior lengthscale_mean{PriorFamily::Normal, 4.5, 1.4142135623730951, 1.0};
  // Length scale of the log length-scale field: 1/l ~ half-t(0, 2^2, 4).
  ScalarPrior field_length_scale{PriorFamily::InverseHalfStudentT, 0.0, 2.0, 4.0};
  // Variance of the log length-scale field: half-t(0, 1, 4).
  ScalarPrior field_variance{PriorFamily::HalfStudentT, 0.0, 1.0, 4.0};
  // Dirichlet concentration: Gamma(shape 3/2, rate 2/3).
  ScalarPrior concentration{PriorFamily::Gamma, 1.5, 2.0 / 3.0, 1.0};
  // Intercepts: t(0, 2.5^2, 4).
  ScalarPrior intercept{PriorFamily::StudentT, 0.0, 2.5, 4.0};
  // Coregionalization standard deviations (and independent-GP magnitudes):
  // half-t(0, 4^2, 4).
  ScalarPrior coreg_sd{PriorFamily::HalfStudentT, 0.0, 4.0, 4.0};
  // LKJ shape for the correlation matrix.
  double lkj_shape = 1.0;

  void validate() const;
};

// LKJ log density (without normalizing constant) in terms of the Cholesky
// factor of the correlation matrix:
//   sum_{i=1}^{J-1} (J - i - 1 + 2 eta - 2) log L_ii   (0-based rows)
// Throws DomainError unless every row has unit norm.
double lkj_chol_logpdf(const Matrix& corr_chol, double eta);

// Bijection from R^{J(J-1)/2} to Cholesky factors of J x J correlation
// matrices via tanh-mapped canonical partial correlations.
struct CorrCholesky {
  Matrix lower;
  double log_jacobian = 0.0;
};
CorrCholesky corr_cholesky_constrain(const double* free, int dim);

// Adds to free_adjoint the gradient of
//   F(L(free)) + w_jac * log_jacobian(free)
// given dF/dL in lower_adjoint (lower triangle).
void corr_cholesky_backprop(const double* free, int dim, const Matrix& lower_adjoint,
                            double w_jac, double* free_adjoint);

// Inverse map (for initialisation from a known correlation matrix).
std::vector<double> corr_cholesky_unconstrain(const Matrix& corr_chol);

// Gradient of lkj_chol_logpdf with respect to the Cholesky entries.
Matrix lkj_chol_grad(const Matrix& corr_chol, double eta);

}  // namespace jsdm
