#pragma once

#include "jsdm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace jsdm::test {

// Central differences with a 4th-order stencil.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  Vector g(x.size());
  Vector y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    auto at = [&](double d) {
      y(i) = xi + d;
      const double v = f(y);
      y(i) = xi;
      return v;
    };
    g(i) = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  }
  return g;
}

inline double rel_grad_error(const Vector& g, const Vector& fd) {
  return (g - fd).lpNorm<Eigen::Infinity>() / std::max(1.0, fd.lpNorm<Eigen::Infinity>());
}

// Asymptotic Kolmogorov distribution: P(sqrt(n) D > x).
inline double kolmogorov_sf(double x) {
  if (x <= 0) return 1.0;
  if (x < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

// One-sample KS test against a cdf; returns the p-value (with the usual
// small-sample correction to the statistic).
template <typename Cdf>
double ks_pvalue(std::vector<double> xs, Cdf&& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  return kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d);
}

inline double ks_uniform_pvalue(std::vector<double> xs) {
  return ks_pvalue(std::move(xs), [](double u) { return std::clamp(u, 0.0, 1.0); });
}

}  // namespace jsdm::test

#include "jsdm/dataset.hpp"
#include "jsdm/random.hpp"

#include <string>

namespace jsdm::test {

// Small random dataset: plots uniform on [0, extent]^2, groups given as
// member lists, resolution n_res for every plot, counts uniform within N.
inline Dataset toy_dataset(std::uint64_t seed, int plots, const std::vector<std::vector<int>>& groups,
                           int n_res, double extent = 20.0) {
  Rng rng = make_stream(seed, 99);
  Dataset d;
  int species = 0;
  for (const auto& g : groups) species += static_cast<int>(g.size());
  for (int i = 0; i < plots; ++i) {
    d.plot_ids.push_back("p" + std::to_string(i));
    d.locations.push_back({extent * uniform_open(rng), extent * uniform_open(rng)});
  }
  for (int j = 0; j < species; ++j) d.species_names.push_back("s" + std::to_string(j));
  for (std::size_t g = 0; g < groups.size(); ++g) d.group_names.push_back("g" + std::to_string(g));
  d.groups.members = groups;
  d.groups.resolution = Eigen::MatrixXi::Constant(plots, static_cast<int>(groups.size()), n_res);
  d.counts = Eigen::MatrixXi::Zero(plots, species);
  for (int i = 0; i < plots; ++i)
    for (const auto& g : groups) {
      int left = n_res;
      for (int j : g) {
        const int y = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(left) / 2 + 1));
        d.counts(i, j) = y;
        left -= y;
      }
    }
  return d;
}

}  // namespace jsdm::test

#include <boost/math/quadrature/tanh_sinh.hpp>

namespace jsdm::test {

inline double log_multinomial(const std::vector<int>& y, int n) {
  double v = std::lgamma(n + 1.0);
  int rest = n;
  for (int c : y) {
    v -= std::lgamma(c + 1.0);
    rest -= c;
  }
  return v - std::lgamma(rest + 1.0);
}

// int_0^1 x^(p-1) (1-x)^(q-1) dx by quadrature, with x = t^(1/p) on the left
// half and 1 - x = s^(1/q) on the right half to remove endpoint singularities.
inline double beta_integral(double p, double q) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double left = ts.integrate(
      [&](double t) { return std::pow(1.0 - std::pow(t, 1.0 / p), q - 1.0) / p; }, 0.0,
      std::pow(0.5, p), 1e-14);
  const double right = ts.integrate(
      [&](double s) { return std::pow(1.0 - std::pow(s, 1.0 / q), p - 1.0) / q; }, 0.0,
      std::pow(0.5, q), 1e-14);
  return left + right;
}

// Integral of Multinomial(y | phi) Dirichlet(phi | a) over the 2-simplex.  In
// stick-breaking coordinates phi1 = v1, phi2 = (1 - v1) v2 the integrand
// separates into a v1 factor and a v2 factor.
inline double simplex_quadrature(const std::vector<int>& y, int n, const std::vector<double>& a) {
  const double log_norm = std::lgamma(a[0] + a[1] + a[2]) - std::lgamma(a[0]) -
                          std::lgamma(a[1]) - std::lgamma(a[2]);
  const double e1 = a[0] + y[0], e2 = a[1] + y[1], e0 = a[2] + (n - y[0] - y[1]);
  return std::exp(log_norm + log_multinomial(y, n)) * beta_integral(e1, e2 + e0) *
         beta_integral(e2, e0);
}

}  // namespace jsdm::test

#include "jsdm/model.hpp"

namespace jsdm::test {

// Interior state with length scales comparable to the toy plot spacing.
inline Vector random_state(const Model& model, Rng& rng) {
  const auto& l = model.layout();
  Vector theta(l.dim);
  for (int i = 0; i < l.dim; ++i) theta(i) = standard_normal(rng);
  for (int k = 0; k < l.kernels; ++k) {
    const int o = l.kernel_params + k * l.params_per_kernel();
    theta(o) = std::log(2.0 + 10.0 * uniform_open(rng));
    if (l.nonstationary) {
      theta(o + 1) = std::log(3.0 + 10.0 * uniform_open(rng));
      theta(o + 2) = std::log(0.05 + 0.5 * uniform_open(rng));
    }
  }
  for (int g = 0; g < l.obs_groups; ++g) theta(l.log_gamma + g) = 0.5 + standard_normal(rng);
  return theta;
}

}  // namespace jsdm::test
