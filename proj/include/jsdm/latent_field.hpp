#pragma once

#include "jsdm/kernels.hpp"
#include "jsdm/linalg.hpp"

#include <span>
#include <vector>

namespace jsdm {

// Sigma_eps = diag(omega) Omega diag(omega), with Omega held through its
// Cholesky factor, and the map from latent component to covariance function.
struct CoregionalizationSpec {
  Vector std_devs;                       // omega, positive
  Matrix corr_chol;                      // lower Cholesky factor of Omega
  int k_distinct = 1;                    // number of distinct kernels
  std::vector<int> kernel_of_component;  // size J, values in [0, k_distinct)

  int species() const { return static_cast<int>(std_devs.size()); }
  Matrix scaled_chol() const;  // diag(omega) L_Omega: columns are the L_j
  Matrix covariance() const;   // Sigma_eps
  void validate() const;
};

// Default LMC(k) map: component j keeps its own kernel for j < k - 1 and
// shares kernel k - 1 otherwise (0-based).
std::vector<int> lmc_kernel_map(int species, int k_distinct);

struct LatentField {
  Matrix f;     // species x locations
  Vector beta;  // per-species intercept
};

LatentField constant_latent(const Vector& beta, int n_locations);

// f_j = beta_j + chol_j z_j.  z is species x locations.
LatentField igp_latent(const Matrix& z, const Vector& beta, std::span<const Matrix> chols);

// f = beta + sum_c L_c (chol_{kappa(c)} z_c)^T, i.e. eps = (diag(omega) L_Omega) U
// with row c of U equal to chol_{kappa(c)} z_c.
LatentField lmc_latent(const Matrix& z, const Vector& beta, const CoregionalizationSpec& coreg,
                       std::span<const Matrix> chols);

// Log length-scale field: log l = mean + chol_field z_l; returns l.
Vector realize_lengthscale_field(const Vector& z_l, double mean, const Matrix& field_chol);

}  // namespace jsdm
