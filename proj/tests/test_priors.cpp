#include "jsdm/errors.hpp"
#include "jsdm/priors.hpp"
#include "jsdm/random.hpp"
#include "support.hpp"

#include <Eigen/Dense>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <doctest.h>
#include <numbers>
#include <vector>

using namespace jsdm;

namespace {

void check_fd(const ScalarPrior& p, double x) {
  const double h = 1e-5 * (1.0 + std::abs(x));
  const double fd = (p.logpdf(x + h).value - p.logpdf(x - h).value) / (2 * h);
  const double g = p.logpdf(x).grad;
  CHECK(std::abs(g - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
}

// Stick-breaking partial correlations z in (-1, 1)^m -> Cholesky factor.
Matrix chol_from_partials(const std::vector<double>& z, int dim) {
  std::vector<double> free;
  for (double v : z) free.push_back(std::atanh(v));
  return corr_cholesky_constrain(free.data(), dim).lower;
}

}  // namespace

TEST_CASE("student t examples") {
  const double mu = 1.0, s = 2.0, nu = 5.0;
  const double mode = std::lgamma(3.0) - std::lgamma(2.5) - 0.5 * std::log(nu * std::numbers::pi) -
                      std::log(s);
  CHECK(student_t_logpdf(mu, mu, s, nu).value == doctest::Approx(mode).epsilon(1e-14));
  boost::math::students_t dist(nu);
  for (double x : {-3.0, 0.2, 4.0})
    CHECK(student_t_logpdf(x, mu, s, nu).value ==
          doctest::Approx(std::log(boost::math::pdf(dist, (x - mu) / s) / s)).epsilon(1e-12));
  for (double x : {-2.0, 0.0, 1.3})
    CHECK(std::abs(student_t_logpdf(x, 0.0, 1.0, 1e6).value - normal_logpdf(x, 0.0, 1.0).value) < 1e-4);
  CHECK_THROWS_AS(half_student_t_logpdf(-0.1, 0.0, 1.0, 4.0), DomainError);
  CHECK_THROWS_AS(inverse_half_student_t_logpdf(0.0, 0.0, 1.0, 4.0), DomainError);
}

TEST_CASE("default length-scale prior puts 0.99 mass below 400 m") {
  // P(l < 400) = P(1/l > 1/400) = 1 - int_0^{1/400} half-t density
  PriorConfig cfg;
  boost::math::quadrature::gauss_kronrod<double, 31> gk;
  const double below = gk.integrate(
      [&](double v) {
        return std::exp(half_student_t_logpdf(v, 0.0, cfg.length_scale.scale, cfg.length_scale.dof).value);
      },
      0.0, 1.0 / 400.0);
  CHECK(1.0 - below == doctest::Approx(0.99).epsilon(0.002));
  // same probability through the inverse-variable density
  boost::math::quadrature::tanh_sinh<double> ts;
  const double p400 = ts.integrate([&](double l) { return std::exp(cfg.length_scale.logpdf(l).value); },
                                   0.0, 400.0);
  CHECK(p400 == doctest::Approx(1.0 - below).epsilon(1e-8));
}

TEST_CASE("gamma examples") {
  CHECK(gamma_logpdf(0.5, 1.0, 1.0).value == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(std::abs(gamma_logpdf(0.75, 1.5, 2.0 / 3.0).grad) < 1e-14);
  boost::math::quadrature::gauss_kronrod<double, 61> gk;
  const double mass =
      gk.integrate([](double x) { return std::exp(gamma_logpdf(x, 1.5, 2.0 / 3.0).value); }, 0.0, 20.0, 15, 1e-13);
  boost::math::gamma_distribution<double> g(1.5, 1.5);
  CHECK(std::abs(mass - boost::math::cdf(g, 20.0)) < 1e-8);
}

TEST_CASE("prior gradients match finite differences") {
  Rng rng = make_stream(31);
  PriorConfig cfg;
  const std::vector<ScalarPrior> positive{cfg.length_scale, cfg.field_length_scale, cfg.field_variance,
                                          cfg.concentration, cfg.coreg_sd};
  const std::vector<ScalarPrior> real{cfg.lengthscale_mean, cfg.intercept};
  for (int rep = 0; rep < 100; ++rep) {
    for (const auto& p : positive) {
      const double x = std::exp(2.0 * standard_normal(rng));
      check_fd(p, x);
      const double u = std::log(x);
      const auto ls = p.logpdf_log_scale(u);
      CHECK(ls.value == doctest::Approx(p.logpdf(x).value + u).epsilon(1e-13));
      const double h = 1e-5 * (1 + std::abs(u));
      const double fd = (p.logpdf_log_scale(u + h).value - p.logpdf_log_scale(u - h).value) / (2 * h);
      CHECK(std::abs(ls.grad - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (const auto& p : real) check_fd(p, 5.0 * standard_normal(rng));
  }
}

TEST_CASE("prior samples follow the prior") {
  Rng rng = make_stream(32);
  PriorConfig cfg;
  std::vector<double> xs;
  for (int i = 0; i < 20000; ++i) xs.push_back(cfg.intercept.sample(rng));
  boost::math::students_t t4(4.0);
  CHECK(test::ks_pvalue(xs, [&](double x) { return boost::math::cdf(t4, x / 2.5); }) > 0.001);
  xs.clear();
  for (int i = 0; i < 20000; ++i) xs.push_back(cfg.concentration.sample(rng));
  boost::math::gamma_distribution<double> g(1.5, 1.5);
  CHECK(test::ks_pvalue(xs, [&](double x) { return boost::math::cdf(g, x); }) > 0.001);
  xs.clear();
  for (int i = 0; i < 20000; ++i) xs.push_back(1.0 / cfg.length_scale.sample(rng));
  boost::math::students_t t5(5.0);
  CHECK(test::ks_pvalue(xs, [&](double v) { return 2.0 * boost::math::cdf(t5, v / 0.19) - 1.0; }) > 0.001);
}

TEST_CASE("prior config validation") {
  PriorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.intercept.scale = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = PriorConfig{};
  cfg.lkj_shape = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK(prior_family_from_string(to_string(PriorFamily::InverseHalfStudentT)) ==
        PriorFamily::InverseHalfStudentT);
}

TEST_CASE("LKJ density examples") {
  Matrix one = Matrix::Identity(1, 1);
  CHECK(lkj_chol_logpdf(one, 1.0) == 0.0);
  // J = 2, eta = 1: constant in the correlation
  for (double z : {-0.9, 0.0, 0.5}) CHECK(lkj_chol_logpdf(chol_from_partials({z}, 2), 1.0) == 0.0);
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 0) = 0.5;
  CHECK_THROWS_AS(lkj_chol_logpdf(bad, 1.0), DomainError);
}

TEST_CASE("LKJ(1) correlation marginals") {
  Rng rng = make_stream(33);
  SUBCASE("J = 2") {
    std::vector<double> r;
    for (int i = 0; i < 100000; ++i) {
      // density of z is flat, so uniform z is an exact draw
      const Matrix l = chol_from_partials({2.0 * uniform_open(rng) - 1.0}, 2);
      r.push_back(0.5 * (l(1, 0) + 1.0));
    }
    CHECK(test::ks_uniform_pvalue(r) > 0.01);
  }
  SUBCASE("J = 3 by rejection on the partial-correlation cube") {
    std::vector<std::vector<double>> r(3);
    int accepted = 0;
    while (accepted < 20000) {
      std::vector<double> z{2 * uniform_open(rng) - 1, 2 * uniform_open(rng) - 1, 2 * uniform_open(rng) - 1};
      std::vector<double> free;
      double log_dz = 0.0;
      for (double v : z) {
        free.push_back(std::atanh(v));
        log_dz += std::log1p(-v * v);
      }
      const auto c = corr_cholesky_constrain(free.data(), 3);
      // density in z: LKJ(L) |dL/dz|, bounded by 1 for eta = 1
      const double logd = lkj_chol_logpdf(c.lower, 1.0) + c.log_jacobian - log_dz;
      if (std::log(uniform_open(rng)) > logd) continue;
      const Matrix omega = c.lower * c.lower.transpose();
      r[0].push_back(0.5 * (omega(1, 0) + 1));
      r[1].push_back(0.5 * (omega(2, 0) + 1));
      r[2].push_back(0.5 * (omega(2, 1) + 1));
      ++accepted;
    }
    // Marginals are Beta(eta - 1 + J/2, eta - 1 + J/2) on (-1, 1); uniform
    // only for J = 2.
    boost::math::beta_distribution<double> marginal(1.5, 1.5);
    for (auto& v : r) {
      CHECK(test::ks_pvalue(v, [&](double x) { return boost::math::cdf(marginal, x); }) > 0.01);
      CHECK(test::ks_uniform_pvalue(v) < 1e-6);
    }
  }
}

TEST_CASE("correlation Cholesky transform") {
  Rng rng = make_stream(34);
  for (int dim : {1, 2, 3, 5}) {
    const int m = dim * (dim - 1) / 2;
    for (int rep = 0; rep < 20; ++rep) {
      Vector free(m);
      for (int i = 0; i < m; ++i) free(i) = standard_normal(rng);
      const auto c = corr_cholesky_constrain(free.data(), dim);
      for (int i = 0; i < dim; ++i) CHECK(c.lower.row(i).squaredNorm() == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(c.lower.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm() == 0.0);
      const auto back = corr_cholesky_unconstrain(c.lower);
      for (int i = 0; i < m; ++i) CHECK(back[static_cast<std::size_t>(i)] == doctest::Approx(free(i)).epsilon(1e-10));
      if (m == 0) continue;

      // log-Jacobian against the numerical Jacobian of free -> strictly lower entries
      Matrix jac(m, m);
      const double h = 1e-6;
      for (int k = 0; k < m; ++k) {
        Vector fp = free, fm = free;
        fp(k) += h;
        fm(k) -= h;
        const Matrix lp = corr_cholesky_constrain(fp.data(), dim).lower;
        const Matrix lm = corr_cholesky_constrain(fm.data(), dim).lower;
        int r = 0;
        for (int i = 1; i < dim; ++i)
          for (int j = 0; j < i; ++j) jac(r++, k) = (lp(i, j) - lm(i, j)) / (2 * h);
      }
      CHECK(c.log_jacobian == doctest::Approx(std::log(std::abs(jac.determinant()))).epsilon(1e-6));

      // backprop of sum W .* L + w * log_jacobian
      Matrix w = Matrix::Zero(dim, dim);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j <= i; ++j) w(i, j) = standard_normal(rng);
      const double wj = 0.7;
      auto f = [&](const Vector& x) {
        const auto cc = corr_cholesky_constrain(x.data(), dim);
        return (cc.lower.array() * w.array()).sum() + wj * cc.log_jacobian;
      };
      Vector g = Vector::Zero(m);
      corr_cholesky_backprop(free.data(), dim, w, wj, g.data());
      CHECK(test::rel_grad_error(g, test::fd_gradient(f, free)) < 1e-7);
    }
  }
}

TEST_CASE("lkj_chol_grad") {
  Rng rng = make_stream(35);
  Vector free(6);
  for (int i = 0; i < 6; ++i) free(i) = standard_normal(rng);
  const auto c = corr_cholesky_constrain(free.data(), 4);
  const Matrix g = lkj_chol_grad(c.lower, 2.0);
  for (int i = 1; i < 4; ++i) CHECK(g(i, i) == doctest::Approx((4 - i - 1 + 2.0) / c.lower(i, i)));
}
