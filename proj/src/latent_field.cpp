#include "jsdm/latent_field.hpp"

#include "jsdm/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace jsdm {

Matrix CoregionalizationSpec::scaled_chol() const {
  return std_devs.asDiagonal() * corr_chol.triangularView<Eigen::Lower>().toDenseMatrix();
}

Matrix CoregionalizationSpec::covariance() const {
  const Matrix l = scaled_chol();
  return l * l.transpose();
}

void CoregionalizationSpec::validate() const {
  const int j = species();
  if (corr_chol.rows() != j || corr_chol.cols() != j)
    throw ValidationError("coregionalization: correlation factor has wrong shape");
  if (k_distinct < 1 || k_distinct > j)
    throw ValidationError("coregionalization: need 1 <= k_distinct <= J");
  if (static_cast<int>(kernel_of_component.size()) != j)
    throw ValidationError("coregionalization: kernel map must have one entry per species");
  for (int kk : kernel_of_component)
    if (kk < 0 || kk >= k_distinct) throw ValidationError("coregionalization: bad kernel index");
  for (int i = 0; i < j; ++i) {
    if (!(std_devs(i) > 0.0)) throw ValidationError("coregionalization: omega must be positive");
    if (!(corr_chol(i, i) > 0.0))
      throw NumericalError("coregionalization: correlation matrix is not positive definite");
    if (std::abs(corr_chol.row(i).head(i + 1).squaredNorm() - 1.0) > 1e-8)
      throw ValidationError("coregionalization: correlation matrix must have unit diagonal");
  }
}

std::vector<int> lmc_kernel_map(int species, int k_distinct) {
  if (k_distinct < 1 || k_distinct > species)
    throw ValidationError("LMC(k) requires 1 <= k <= J (k=" + std::to_string(k_distinct) +
                          ", J=" + std::to_string(species) + ")");
  std::vector<int> out(static_cast<std::size_t>(species));
  for (int j = 0; j < species; ++j) out[static_cast<std::size_t>(j)] = std::min(j, k_distinct - 1);
  return out;
}

LatentField constant_latent(const Vector& beta, int n_locations) {
  LatentField out;
  out.beta = beta;
  out.f = beta.replicate(1, n_locations);
  return out;
}

LatentField igp_latent(const Matrix& z, const Vector& beta, std::span<const Matrix> chols) {
  const auto j = beta.size();
  if (z.rows() != j || static_cast<Eigen::Index>(chols.size()) != j)
    throw ValidationError("igp_latent: dimension mismatch");
  LatentField out;
  out.beta = beta;
  out.f.resize(j, z.cols());
  for (Eigen::Index s = 0; s < j; ++s) {
    const Matrix& c = chols[static_cast<std::size_t>(s)];
    if (c.rows() != z.cols()) throw ValidationError("igp_latent: Cholesky factor has wrong size");
    out.f.row(s) = (c.triangularView<Eigen::Lower>() * z.row(s).transpose()).transpose();
    out.f.row(s).array() += beta(s);
  }
  return out;
}

LatentField lmc_latent(const Matrix& z, const Vector& beta, const CoregionalizationSpec& coreg,
                       std::span<const Matrix> chols) {
  coreg.validate();
  const auto j = beta.size();
  if (z.rows() != j || coreg.species() != j)
    throw ValidationError("lmc_latent: dimension mismatch");
  if (static_cast<int>(chols.size()) != coreg.k_distinct)
    throw ValidationError("lmc_latent: need one Cholesky factor per distinct kernel");
  Matrix u(j, z.cols());
  for (Eigen::Index c = 0; c < j; ++c) {
    const Matrix& l = chols[static_cast<std::size_t>(coreg.kernel_of_component[c])];
    if (l.rows() != z.cols()) throw ValidationError("lmc_latent: Cholesky factor has wrong size");
    u.row(c) = (l.triangularView<Eigen::Lower>() * z.row(c).transpose()).transpose();
  }
  LatentField out;
  out.beta = beta;
  out.f = coreg.scaled_chol() * u;
  out.f.colwise() += beta;
  return out;
}

Vector realize_lengthscale_field(const Vector& z_l, double mean, const Matrix& field_chol) {
  if (field_chol.rows() != z_l.size())
    throw ValidationError("realize_lengthscale_field: dimension mismatch");
  Vector log_l = field_chol.triangularView<Eigen::Lower>() * z_l;
  log_l.array() += mean;
  return log_l.array().exp();
}

}  // namespace jsdm
