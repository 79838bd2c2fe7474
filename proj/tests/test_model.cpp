#include "jsdm/errors.hpp"
#include "jsdm/model.hpp"
#include "jsdm/observation.hpp"
#include "support.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <doctest.h>
#include <limits>

using namespace jsdm;

namespace {

const std::vector<std::vector<int>> kGroups{{0, 1}, {2}};

}  // namespace

TEST_CASE("model names") {
  for (const auto& name : ModelSpec::table_names()) CHECK(ModelSpec::from_name(name).name() == name);
  CHECK(ModelSpec::table_names().size() == 12);
  CHECK(ModelSpec::from_name("LMC(1)_S+DM").name() == "LMC1-S-DM");
  CHECK(ModelSpec::from_name("igp-ns-bb").name() == "IGP-NS-BB");
  CHECK(ModelSpec::from_name("C+BB").name() == "C-BB");
  for (const char* bad : {"", "C", "C-S-DM", "LMC-S-DM", "LMC0-S-DM", "IGP-X-DM", "IGP-S-XX"})
    CHECK_THROWS_AS(ModelSpec::from_name(bad), ValidationError);
}

TEST_CASE("dimension examples") {
  CHECK(dimension(ModelSpec::from_name("C-DM"), 2, 1, 7) == 3);
  CHECK(dimension(ModelSpec::from_name("IGP-S-BB"), 1, 1, 10) == 14);
  CHECK(dimension(ModelSpec::from_name("LMC1-S-DM"), 3, 1, 5) == 26);
  // block audit for the NS variant: + 2 field hyperparameters + 5 field z
  CHECK(dimension(ModelSpec::from_name("LMC1-NS-DM"), 3, 1, 5) == 26 + 2 + 5);
  CHECK(dimension(ModelSpec::from_name("IGP-S-BB"), 3, 1, 4) == 3 + 3 + 3 + 3 + 12);
  CHECK(dimension(ModelSpec::from_name("C-BB"), 3, 1, 4) == 6);
}

TEST_CASE("LMC validation") {
  auto d = test::toy_dataset(1, 4, {{0}}, 10);
  CHECK_THROWS_AS(Model(ModelSpec::from_name("LMC1-S-DM"), d), ValidationError);
  auto d3 = test::toy_dataset(1, 4, kGroups, 10);
  CHECK_THROWS_AS(Model(ModelSpec::from_name("LMC4-S-DM"), d3), ValidationError);
  auto spec = ModelSpec::from_name("LMC2-S-DM");
  spec.kernel_of_component = {0, 0, 0};
  CHECK_THROWS_AS(Model(spec, d3), ValidationError);
  spec.kernel_of_component = {1, 0, 0};
  CHECK_NOTHROW(Model(spec, d3));
}

TEST_CASE("pack and unpack are inverse") {
  auto d = test::toy_dataset(2, 6, kGroups, 20);
  Rng rng = make_stream(51);
  for (const auto& name : ModelSpec::table_names()) {
    Model m(ModelSpec::from_name(name), d);
    const Vector theta = test::random_state(m, rng);
    const Vector back = ParameterState::unpack(m.layout(), theta).pack(m.layout());
    CHECK(back == theta);
    CHECK(m.parameter_names().size() == static_cast<std::size_t>(m.dimension()));
  }
}

TEST_CASE("C+BB single plot hand computation") {
  Dataset d = test::toy_dataset(3, 1, {{0}}, 1);
  d.counts(0, 0) = 0;
  Model m(ModelSpec::from_name("C-BB"), d);
  Vector theta(2);
  theta << 0.4, -0.3;
  const double beta = theta(0), u = theta(1), gamma = std::exp(u);
  boost::math::students_t t4(4.0);
  boost::math::gamma_distribution<double> g(1.5, 1.5);
  const double expected = -std::log1p(std::exp(beta)) + std::log(boost::math::pdf(t4, beta / 2.5) / 2.5) +
                          std::log(boost::math::pdf(g, gamma)) + u;
  CHECK(m.log_posterior(theta) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("C+DM likelihood matches simplex quadrature") {
  Dataset d = test::toy_dataset(4, 2, {{0, 1}}, 3);
  d.counts << 1, 2, 0, 1;
  Model m(ModelSpec::from_name("C-DM"), d);
  Vector theta(3);
  theta << 0.3, -0.5, 0.2;
  const auto alpha = softmax_alpha(std::vector<double>{0.3, -0.5});
  const double gamma = std::exp(0.2);
  const std::vector<double> a{alpha[0] * gamma, alpha[1] * gamma, alpha[2] * gamma};
  double lik = 0.0;
  for (int i = 0; i < 2; ++i) lik += std::log(test::simplex_quadrature({d.counts(i, 0), d.counts(i, 1)}, 3, a));
  const auto& pr = m.spec().priors;
  const double prior = pr.intercept.logpdf(0.3).value + pr.intercept.logpdf(-0.5).value +
                       pr.concentration.logpdf_log_scale(0.2).value;
  CHECK(std::abs(m.log_posterior(theta) - (lik + prior)) < 1e-6);
}

TEST_CASE("gradient matches finite differences for every configuration") {
  auto d = test::toy_dataset(5, 8, kGroups, 20);
  Rng rng = make_stream(52);
  for (const auto& name : ModelSpec::table_names()) {
    CAPTURE(name);
    Model m(ModelSpec::from_name(name), d);
    for (int rep = 0; rep < 5; ++rep) {
      const Vector theta = test::random_state(m, rng);
      Vector g;
      const double lp = m.log_posterior_grad(theta, g);
      REQUIRE(std::isfinite(lp));
      CHECK(lp == m.log_posterior(theta));
      const Vector fd = test::fd_gradient([&](const Vector& x) { return m.log_posterior(x); }, theta, 1e-4);
      CHECK(test::rel_grad_error(g, fd) < 1e-5);
    }
  }
}

TEST_CASE("log posterior is deterministic") {
  auto d = test::toy_dataset(6, 8, kGroups, 20);
  Rng rng = make_stream(53);
  Model m(ModelSpec::from_name("LMC2-NS-DM"), d);
  const Vector theta = test::random_state(m, rng);
  Vector g1, g2;
  const double a = m.log_posterior_grad(theta, g1);
  const double b = m.log_posterior_grad(theta, g2);
  CHECK(a == b);
  CHECK(g1 == g2);
}

TEST_CASE("likelihood factorizes over groups") {
  auto d = test::toy_dataset(7, 6, kGroups, 20);
  Rng rng = make_stream(54);
  for (const char* name : {"LMC1-S-DM", "IGP-S-BB"}) {
    Model m(ModelSpec::from_name(name), d);
    const Vector theta = test::random_state(m, rng);
    auto d2 = d;
    for (int i = 0; i < d.plots(); ++i) d2.counts(i, 2) = (d.counts(i, 2) + 7) % 21;
    Model m2(ModelSpec::from_name(name), d2);
    const auto st = m.latent_state(theta);
    const int g = m.observation_groups().group_of_species()[2];
    double diff = 0.0;
    for (int i = 0; i < d.plots(); ++i) {
      const auto alpha = softmax_alpha(std::vector<double>{st.f(2, i)});
      diff += dirmult_logpmf(std::vector<int>{d2.counts(i, 2)}, 20, alpha, st.gamma(g)) -
              dirmult_logpmf(std::vector<int>{d.counts(i, 2)}, 20, alpha, st.gamma(g));
    }
    CHECK(m2.log_posterior(theta) - m.log_posterior(theta) == doctest::Approx(diff).epsilon(1e-10));
  }
}

TEST_CASE("intercept shift directional derivative") {
  auto d = test::toy_dataset(8, 5, kGroups, 20);
  Model m(ModelSpec::from_name("C-DM"), d);
  Vector theta(5);
  theta << 0.1, -0.2, 0.3, 0.5, 1.0;
  Vector g;
  m.log_posterior_grad(theta, g);
  Vector dir = Vector::Zero(5);
  dir.head(3).setOnes();
  const double h = 1e-5;
  const double fd = (m.log_posterior(theta + h * dir) - m.log_posterior(theta - h * dir)) / (2 * h);
  CHECK(g.dot(dir) == doctest::Approx(fd).epsilon(1e-7));
}

TEST_CASE("non-finite states return -inf and are counted") {
  auto d = test::toy_dataset(9, 4, kGroups, 20);
  Model m(ModelSpec::from_name("IGP-S-DM"), d);
  Vector theta = Vector::Zero(m.dimension());
  const long before = m.failures();
  theta(0) = std::numeric_limits<double>::quiet_NaN();
  Vector g;
  CHECK(m.log_posterior_grad(theta, g) == -std::numeric_limits<double>::infinity());
  CHECK(g.size() == m.dimension());
  theta(0) = 0.0;
  theta(m.layout().log_gamma) = 1e5;  // gamma overflows
  CHECK(m.log_posterior(theta) == -std::numeric_limits<double>::infinity());
  CHECK(m.failures() == before + 2);
  CHECK_THROWS_AS(m.log_posterior(Vector::Zero(3)), ValidationError);
}

TEST_CASE("prior draws of the correlation parameters follow LKJ") {
  auto d = test::toy_dataset(10, 3, kGroups, 20);
  Model m(ModelSpec::from_name("LMC1-S-DM"), d);
  Rng rng = make_stream(55);
  std::vector<double> r10, r21;
  for (int i = 0; i < 20000; ++i) {
    const Vector theta = m.sample_prior(rng);
    const auto c = corr_cholesky_constrain(theta.data() + m.layout().corr_free, 3);
    const Matrix omega = c.lower * c.lower.transpose();
    r10.push_back(omega(1, 0));
    r21.push_back(omega(2, 1));
  }
  boost::math::beta_distribution<double> marginal(1.5, 1.5);
  auto cdf = [&](double x) { return boost::math::cdf(marginal, 0.5 * (x + 1)); };
  CHECK(test::ks_pvalue(r10, cdf) > 0.01);
  CHECK(test::ks_pvalue(r21, cdf) > 0.01);
}
