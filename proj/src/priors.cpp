#include "jsdm/priors.hpp"

#include "jsdm/errors.hpp"
#include "jsdm/special.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace jsdm {

namespace {
constexpr double kLogTwo = std::numbers::ln2;
constexpr double kLogPi = 1.1447298858494002;
}  // namespace

LogDensity normal_logpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return {-0.5 * (std::log(2.0) + kLogPi) - std::log(sd) - 0.5 * z * z, -z / sd};
}

LogDensity student_t_logpdf(double x, double mu, double s, double nu) {
  if (!(s > 0.0) || !(nu > 0.0)) throw DomainError("student_t: scale and dof must be positive");
  const double d = x - mu;
  const double value = log_gamma(0.5 * (nu + 1.0)) - log_gamma(0.5 * nu) -
                       0.5 * (std::log(nu) + kLogPi) - std::log(s) -
                       0.5 * (nu + 1.0) * std::log1p(d * d / (nu * s * s));
  const double grad = -(nu + 1.0) * d / (nu * s * s + d * d);
  return {value, grad};
}

LogDensity half_student_t_logpdf(double x, double mu, double s, double nu) {
  if (x < mu) throw DomainError("half_student_t: argument below the support");
  auto out = student_t_logpdf(x, mu, s, nu);
  out.value += kLogTwo;
  return out;
}

LogDensity inverse_half_student_t_logpdf(double l, double mu, double s, double nu) {
  if (!(l > 0.0)) throw DomainError("inverse_half_student_t: length scale must be positive");
  const double v = 1.0 / l;
  const auto inner = half_student_t_logpdf(v, mu, s, nu);
  return {inner.value - 2.0 * std::log(l), -inner.grad / (l * l) - 2.0 / l};
}

LogDensity gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) throw DomainError("gamma_logpdf: argument must be positive");
  if (!(shape > 0.0) || !(rate > 0.0)) throw DomainError("gamma_logpdf: bad parameters");
  return {shape * std::log(rate) - log_gamma(shape) + (shape - 1.0) * std::log(x) - rate * x,
          (shape - 1.0) / x - rate};
}

LogDensity ScalarPrior::logpdf(double x) const {
  switch (family) {
    case PriorFamily::Normal: return normal_logpdf(x, location, scale);
    case PriorFamily::StudentT: return student_t_logpdf(x, location, scale, dof);
    case PriorFamily::HalfStudentT: return half_student_t_logpdf(x, location, scale, dof);
    case PriorFamily::InverseHalfStudentT:
      return inverse_half_student_t_logpdf(x, location, scale, dof);
    case PriorFamily::Gamma: return gamma_logpdf(x, location, scale);
  }
  throw DomainError("unknown prior family");
}

LogDensity ScalarPrior::logpdf_log_scale(double u) const {
  const double x = std::exp(u);
  const auto inner = logpdf(x);
  return {inner.value + u, inner.grad * x + 1.0};
}

void ScalarPrior::validate(const std::string& what) const {
  const bool ok = family == PriorFamily::Gamma
                      ? (location > 0.0 && scale > 0.0)
                      : (scale > 0.0 && std::isfinite(location) &&
                         (family == PriorFamily::Normal || dof > 0.0));
  if (!ok) throw ValidationError("invalid prior hyperparameters for " + what);
}

double ScalarPrior::sample(Rng& rng) const {
  auto student = [&] {
    // t = Z / sqrt(V / nu), V ~ chi^2_nu = 2 Gamma(nu / 2)
    const double v = 2.0 * std::exp(log_gamma_variate(rng, 0.5 * dof));
    return standard_normal(rng) / std::sqrt(v / dof);
  };
  switch (family) {
    case PriorFamily::Normal: return location + scale * standard_normal(rng);
    case PriorFamily::StudentT: return location + scale * student();
    case PriorFamily::HalfStudentT: return location + scale * std::abs(student());
    case PriorFamily::InverseHalfStudentT:
      return 1.0 / (location + scale * std::abs(student()));
    case PriorFamily::Gamma: return std::exp(log_gamma_variate(rng, location)) / scale;
  }
  throw DomainError("unknown prior family");
}

std::string to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::Normal: return "normal";
    case PriorFamily::StudentT: return "student_t";
    case PriorFamily::HalfStudentT: return "half_student_t";
    case PriorFamily::InverseHalfStudentT: return "inverse_half_student_t";
    case PriorFamily::Gamma: return "gamma";
  }
  return "unknown";
}

PriorFamily prior_family_from_string(const std::string& s) {
  if (s == "normal") return PriorFamily::Normal;
  if (s == "student_t") return PriorFamily::StudentT;
  if (s == "half_student_t") return PriorFamily::HalfStudentT;
  if (s == "inverse_half_student_t") return PriorFamily::InverseHalfStudentT;
  if (s == "gamma") return PriorFamily::Gamma;
  throw ValidationError("unknown prior family '" + s + "'");
}

void PriorConfig::validate() const {
  length_scale.validate("length_scale");
  lengthscale_mean.validate("lengthscale_mean");
  field_length_scale.validate("field_length_scale");
  field_variance.validate("field_variance");
  concentration.validate("concentration");
  intercept.validate("intercept");
  coreg_sd.validate("coreg_sd");
  if (!(lkj_shape >= 1.0)) throw ValidationError("LKJ shape must be >= 1");
}

double lkj_chol_logpdf(const Matrix& corr_chol, double eta) {
  const Eigen::Index k = corr_chol.rows();
  for (Eigen::Index i = 0; i < k; ++i)
    if (std::abs(corr_chol.row(i).head(i + 1).squaredNorm() - 1.0) > 1e-8)
      throw DomainError("lkj_chol_logpdf: rows of the Cholesky factor must have unit norm");
  double lp = 0.0;
  for (Eigen::Index i = 1; i < k; ++i)
    lp += (static_cast<double>(k - i - 1) + 2.0 * eta - 2.0) * std::log(corr_chol(i, i));
  return lp;
}

Matrix lkj_chol_grad(const Matrix& corr_chol, double eta) {
  const Eigen::Index k = corr_chol.rows();
  Matrix g = Matrix::Zero(k, k);
  for (Eigen::Index i = 1; i < k; ++i)
    g(i, i) = (static_cast<double>(k - i - 1) + 2.0 * eta - 2.0) / corr_chol(i, i);
  return g;
}

CorrCholesky corr_cholesky_constrain(const double* free, int dim) {
  CorrCholesky out;
  out.lower = Matrix::Zero(dim, dim);
  if (dim == 0) return out;
  out.lower(0, 0) = 1.0;
  int k = 0;
  for (int i = 1; i < dim; ++i) {
    double w = 1.0;
    for (int j = 0; j < i; ++j) {
      const double z = std::tanh(free[k++]);
      out.log_jacobian += std::log1p(-z * z);
      if (j > 0) out.log_jacobian += 0.5 * std::log(w);
      const double x = z * std::sqrt(w);
      out.lower(i, j) = x;
      w -= x * x;
    }
    out.lower(i, i) = std::sqrt(w);
  }
  return out;
}

void corr_cholesky_backprop(const double* free, int dim, const Matrix& lower_adjoint,
                            double w_jac, double* free_adjoint) {
  int offset = 0;
  std::vector<double> z, w, x;
  for (int i = 1; i < dim; ++i) {
    z.assign(static_cast<std::size_t>(i), 0.0);
    w.assign(static_cast<std::size_t>(i) + 1, 0.0);
    x.assign(static_cast<std::size_t>(i), 0.0);
    w[0] = 1.0;
    for (int j = 0; j < i; ++j) {
      z[j] = std::tanh(free[offset + j]);
      x[j] = z[j] * std::sqrt(w[j]);
      w[j + 1] = w[j] - x[j] * x[j];
    }
    double wbar = w[i] > 0.0 ? lower_adjoint(i, i) / (2.0 * std::sqrt(w[i])) : 0.0;
    for (int j = i - 1; j >= 0; --j) {
      // w[j + 1] = w[j] - x[j]^2
      const double xbar = lower_adjoint(i, j) - 2.0 * x[j] * wbar;
      double wbar_j = wbar;
      const double s = std::sqrt(w[j]);
      const double zbar = xbar * s;
      if (s > 0.0) wbar_j += xbar * z[j] / (2.0 * s);
      if (j > 0) wbar_j += w_jac * 0.5 / w[j];
      free_adjoint[offset + j] += zbar * (1.0 - z[j] * z[j]) - w_jac * 2.0 * z[j];
      wbar = wbar_j;
    }
    offset += i;
  }
}

std::vector<double> corr_cholesky_unconstrain(const Matrix& corr_chol) {
  const int dim = static_cast<int>(corr_chol.rows());
  std::vector<double> out;
  for (int i = 1; i < dim; ++i) {
    double w = 1.0;
    for (int j = 0; j < i; ++j) {
      const double x = corr_chol(i, j);
      const double z = std::clamp(x / std::sqrt(w), -1.0 + 1e-15, 1.0 - 1e-15);
      out.push_back(std::atanh(z));
      w -= x * x;
    }
  }
  return out;
}

}  // namespace jsdm
