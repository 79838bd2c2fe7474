#include "jsdm/errors.hpp"
#include "jsdm/model.hpp"
#include "jsdm/predict.hpp"
#include "support.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace jsdm;

namespace {

// One species on a line at x = 0, 3, 7.
struct LineSetup {
  Dataset data;
  Model model;
  Vector theta;
};

LineSetup line_model(const std::string& name, double length_scale, double sd) {
  Dataset d = test::toy_dataset(4, 3, {{0}}, 10);
  d.locations = {{0.0, 0.0}, {3.0, 0.0}, {7.0, 0.0}};
  Model m(ModelSpec::from_name(name), d);
  auto st = ParameterState::unpack(m.layout(), Vector::Zero(m.dimension()));
  st.beta(0) = 0.3;
  st.kernel_params(0, 0) = std::log(length_scale);
  if (st.log_sd.size()) st.log_sd(0) = std::log(sd);
  st.z.row(0) << 0.8, -1.1, 0.4;
  Vector theta = st.pack(m.layout());
  return {d, std::move(m), std::move(theta)};
}

Matrix exp_kernel(const std::vector<double>& a, const std::vector<double>& b, double l) {
  Matrix k(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) k(i, j) = std::exp(-std::abs(a[i] - b[j]) / l);
  return k;
}

}  // namespace

TEST_CASE("mesh over a 10 x 10 square with A = 4 has 25 cells") {
  const auto mesh = build_mesh(Region::rectangle(0, 0, 10, 10), 4.0);
  CHECK(mesh.nx == 5);
  CHECK(mesh.ny == 5);
  CHECK(mesh.active_cells().size() == 25);
  CHECK(mesh.cell_area() == doctest::Approx(4.0));
  CHECK(mesh.centroids[0].x == doctest::Approx(1.0));
  CHECK(mesh.centroids[24].y == doctest::Approx(9.0));
}

TEST_CASE("masked cells are excluded") {
  Region r = Region::rectangle(0, 0, 10, 10);
  r.holes.push_back({{0, 0}, {4, 0}, {4, 4}, {0, 4}});
  const auto mesh = build_mesh(r, 4.0);
  CHECK(mesh.active_cells().size() == 21);
  CHECK(r.area() == doctest::Approx(84.0));

  const auto disc = build_mesh(Region::disc({0, 0}, 5.0), 1.0);
  const double covered = static_cast<double>(disc.active_cells().size());
  CHECK(covered == doctest::Approx(M_PI * 25.0).epsilon(0.1));

  CHECK_THROWS_AS(build_mesh(Region::rectangle(0, 0, 10, 10), 0.0), ValidationError);
  CHECK_THROWS_AS(build_mesh(Region::rectangle(0, 0, 0, 10), 1.0), ValidationError);
  CHECK_THROWS_AS(build_mesh(Region::polygon({{0, 0}, {1, 1}}), 1.0), ValidationError);
}

TEST_CASE("polygon region") {
  Region tri = Region::polygon({{0, 0}, {10, 0}, {0, 10}});
  CHECK(tri.area() == doctest::Approx(50.0));
  CHECK(tri.contains({1, 1}));
  CHECK_FALSE(tri.contains({6, 6}));
  const auto mesh = build_mesh(tri, 1.0);
  CHECK(mesh.active_cells().size() == 45);  // centroids strictly below x + y = 10
}

TEST_CASE("prediction at a data location interpolates") {
  auto s = line_model("IGP-S-BB", 5.0, 1.0);
  Rng rng = make_stream(3);
  const std::vector<Location> at{{3.0, 0.0}};
  const auto mom = conditional_latent_moments(s.model, s.theta, at, rng);
  const auto st = s.model.latent_state(s.theta);
  CHECK(std::abs(mom.mean(0, 0) - st.f(0, 1)) < 1e-6);  // jitter-level bias
  CHECK(mom.variance(0, 0) <= 1e-8);
}

TEST_CASE("prediction far from the data reverts to the prior") {
  auto s = line_model("IGP-S-DM", 2.0, 1.7);
  Rng rng = make_stream(4);
  const std::vector<Location> far{{500.0, 0.0}};
  const auto mom = conditional_latent_moments(s.model, s.theta, far, rng);
  CHECK(mom.mean(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(std::abs(mom.variance(0, 0) / (1.7 * 1.7) - 1.0) < 0.01);
}

TEST_CASE("three point kriging matches the closed form") {
  auto s = line_model("IGP-S-BB", 4.0, 1.0);
  Rng rng = make_stream(5);
  const std::vector<double> xs{0.0, 3.0, 7.0}, xn{1.5, 5.0, 10.0};
  std::vector<Location> at;
  for (double x : xn) at.push_back({x, 0.0});
  const auto mom = conditional_latent_moments(s.model, s.theta, at, rng);
  const auto st = s.model.latent_state(s.theta);

  const Matrix k = exp_kernel(xs, xs, 4.0);
  const Matrix ks = exp_kernel(xs, xn, 4.0);
  const Matrix kinv = k.inverse();
  const Vector resid = (st.f.row(0).array() - 0.3).matrix().transpose();
  const Vector mean = (ks.transpose() * kinv * resid).array() + 0.3;
  const Vector var = (1.0 - (ks.transpose() * kinv * ks).diagonal().array()).matrix();
  for (int i = 0; i < 3; ++i) {
    CHECK(mom.mean(0, i) == doctest::Approx(mean(i)).epsilon(1e-6));
    CHECK(mom.variance(0, i) == doctest::Approx(var(i)).epsilon(1e-6));
  }
}

TEST_CASE("joint conditional draws match the conditional moments") {
  auto d = test::toy_dataset(8, 10, {{0, 1}, {2}}, 20);
  for (const std::string name : {"IGP-S-DM", "LMC1-NS-DM", "LMC2-S-DM", "IGP-NS-BB"}) {
    Model m(ModelSpec::from_name(name), d);
    Rng rng = make_stream(17);
    Vector theta = test::random_state(m, rng);
    const std::vector<Location> at{{2.0, 3.0}, {2.5, 3.0}, {15.0, 4.0}};
    const bool ns = m.spec().kernel == KernelKind::NonStationary;
    const int n = 4000;
    Matrix sum = Matrix::Zero(3, 3), sum2 = Matrix::Zero(3, 3);
    Matrix mom_mean = Matrix::Zero(3, 3), mom_var = Matrix::Zero(3, 3);
    for (int r = 0; r < n; ++r) {
      Rng a = make_stream(1, r);
      const Matrix f = conditional_latent(m, theta, at, a);
      sum += f;
      sum2 += f.array().square().matrix();
      if (ns || r == 0) {
        // NS moments depend on the drawn length scales: average the mixture
        Rng b = make_stream(2, r);
        const auto mom = conditional_latent_moments(m, theta, at, b);
        mom_mean += mom.mean;
        mom_var += (mom.variance.array() + mom.mean.array().square()).matrix();
      }
    }
    const double k = ns ? n : 1.0;
    const Matrix em = sum / n;
    const Matrix ev = (sum2 / n).array() - em.array().square();
    const Matrix mm = mom_mean / k;
    const Matrix mv = (mom_var / k).array() - mm.array().square();
    INFO(name);
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(em(j, i) - mm(j, i)) < 5.0 * std::sqrt(mv(j, i) / n) + 1e-9);
        CHECK(ev(j, i) == doctest::Approx(mv(j, i)).epsilon(0.15));
      }
  }
}

TEST_CASE("joint and pointwise modes share marginals") {
  auto s = line_model("IGP-S-DM", 3.0, 1.2);
  const std::vector<Location> at{{1.0, 0.0}, {1.2, 0.0}};
  double cov_joint = 0.0, cov_point = 0.0;
  const int n = 20000;
  for (int r = 0; r < n; ++r) {
    Rng a = make_stream(7, r), b = make_stream(8, r);
    const Matrix fj = conditional_latent(s.model, s.theta, at, a, ConditionalMode::Joint);
    const Matrix fp = conditional_latent(s.model, s.theta, at, b, ConditionalMode::Pointwise);
    Rng c = make_stream(9);
    const auto mom = conditional_latent_moments(s.model, s.theta, at, c);
    cov_joint += (fj(0, 0) - mom.mean(0, 0)) * (fj(0, 1) - mom.mean(0, 1));
    cov_point += (fp(0, 0) - mom.mean(0, 0)) * (fp(0, 1) - mom.mean(0, 1));
  }
  // nearby sites: strongly correlated jointly, uncorrelated pointwise
  CHECK(cov_joint / n > 0.05);
  CHECK(std::abs(cov_point / n) < 0.01);
}

TEST_CASE("adding a predicted point to the data does not change the prediction") {
  // condition on {data, a} with u(a) drawn from its conditional, then predict b;
  // the mixture over u(a) must equal the direct prediction at b.
  auto s = line_model("IGP-S-BB", 4.0, 1.0);
  const Location a{5.0, 0.0}, b{6.0, 0.0};
  Rng rng = make_stream(10);
  const std::vector<Location> at_a{a}, at_b{b};
  const auto ma = conditional_latent_moments(s.model, s.theta, at_a, rng);
  const auto mb = conditional_latent_moments(s.model, s.theta, at_b, rng);

  Dataset aug = test::toy_dataset(4, 4, {{0}}, 10);
  aug.locations = {{0.0, 0.0}, {3.0, 0.0}, {7.0, 0.0}, a};
  Model m2(ModelSpec::from_name("IGP-S-BB"), aug);
  auto st = ParameterState::unpack(s.model.layout(), s.theta);
  auto st2 = ParameterState::unpack(m2.layout(), Vector::Zero(m2.dimension()));
  st2.beta = st.beta;
  st2.kernel_params = st.kernel_params;
  st2.log_sd = st.log_sd;

  // u(a) = mu +- sd reproduces the first two moments of a linear map exactly
  double means[2], vars[2];
  for (int side = 0; side < 2; ++side) {
    const double fa = ma.mean(0, 0) + (side ? 1.0 : -1.0) * std::sqrt(ma.variance(0, 0));
    st2.z.row(0).head(3) = st.z.row(0);
    st2.z(0, 3) = 0.0;
    const auto ls = m2.latent_state(st2.pack(m2.layout()));
    const Matrix& chol = ls.kernels[0].chol;
    // f(a) = beta + sd (chol.row(3) z) -> solve for z_a
    const double partial = chol.row(3).head(3).dot(st.z.row(0).transpose());
    st2.z(0, 3) = ((fa - st.beta(0)) / std::exp(st.log_sd(0)) - partial) / chol(3, 3);
    const Vector theta2 = st2.pack(m2.layout());
    CHECK(m2.latent_state(theta2).f(0, 3) == doctest::Approx(fa).epsilon(1e-9));
    const auto mom = conditional_latent_moments(m2, theta2, at_b, rng);
    means[side] = mom.mean(0, 0);
    vars[side] = mom.variance(0, 0);
  }
  const double mix_mean = 0.5 * (means[0] + means[1]);
  const double half = 0.5 * (means[1] - means[0]);
  const double mix_var = 0.5 * (vars[0] + vars[1]) + half * half;
  CHECK(mix_mean == doctest::Approx(mb.mean(0, 0)).epsilon(1e-7));
  CHECK(mix_var == doctest::Approx(mb.variance(0, 0)).epsilon(1e-6));
}

TEST_CASE("predicted covers sum to one within each group") {
  auto d = test::toy_dataset(9, 8, {{0, 1}, {2}}, 20);
  for (const std::string name : {"LMC1-NS-DM", "IGP-S-BB", "C-DM"}) {
    Model m(ModelSpec::from_name(name), d);
    Rng rng = make_stream(21);
    Matrix draws(5, m.dimension());
    for (int r = 0; r < 5; ++r) draws.row(r) = test::random_state(m, rng).transpose();
    const auto mesh = build_mesh(Region::rectangle(0, 0, 20, 20), 16.0);
    PredictOptions opt;
    opt.trials = 25;
    opt.seed = 5;
    const auto cov = predict_cover(m, draws, mesh, opt);
    REQUIRE(cov.draws() == 5);
    for (int r = 0; r < cov.draws(); ++r) {
      const auto& c = cov.cover[static_cast<std::size_t>(r)];
      const auto& e = cov.empty[static_cast<std::size_t>(r)];
      for (Eigen::Index i = 0; i < c.cols(); ++i)
        for (std::size_t g = 0; g < cov.groups.size(); ++g) {
          double s = e(static_cast<Eigen::Index>(g), i);
          int y = 0;
          for (int j : cov.groups[g]) {
            s += c(j, i);
            y += cov.counts[static_cast<std::size_t>(r)](j, i);
            CHECK(c(j, i) >= 0.0);
          }
          CHECK(std::abs(s - 1.0) < 1e-12);
          CHECK(y <= 25);
        }
    }
  }
}

TEST_CASE("constant model latents do not vary across cells") {
  auto d = test::toy_dataset(9, 8, {{0, 1}, {2}}, 20);
  Model m(ModelSpec::from_name("C-DM"), d);
  Rng rng = make_stream(22);
  const Vector theta = test::random_state(m, rng);
  const std::vector<Location> at{{0, 0}, {50, 50}, {3, 9}};
  const Matrix f = conditional_latent(m, theta, at, rng);
  for (int i = 1; i < 3; ++i) CHECK(f.col(i) == f.col(0));
}

TEST_CASE("total cover") {
  auto d = test::toy_dataset(9, 8, {{0, 1}, {2}}, 20);
  Model m(ModelSpec::from_name("C-DM"), d);
  Rng rng = make_stream(23);
  const Vector theta = test::random_state(m, rng);

  SUBCASE("single cell equals that cell's draws") {
    Matrix draws = theta.transpose().replicate(30, 1);
    const std::vector<Location> one{{1, 1}};
    const auto cov = predict_cover(m, draws, one, 4.0, {});
    const auto tot = total_cover(cov, {{0, 1}}, {"a"});
    for (int r = 0; r < cov.draws(); ++r) {
      for (int j = 0; j < 3; ++j) CHECK(tot.draws(r, j) == cov.cover[static_cast<std::size_t>(r)](j, 0));
      CHECK(tot.draws(r, 3) == doctest::Approx(tot.draws(r, 0) + tot.draws(r, 1)));
    }
    CHECK(tot.names.back() == "all");
  }

  SUBCASE("uniform alpha: total mean equals alpha") {
    const int draws_n = 2000;
    Matrix draws = theta.transpose().replicate(draws_n, 1);
    const auto mesh = build_mesh(Region::rectangle(0, 0, 10, 10), 4.0);
    PredictOptions opt;
    opt.max_draws = draws_n;
    const auto cov = predict_cover(m, draws, mesh, opt);
    const auto tot = total_cover(cov, {}, {});
    const auto st = m.latent_state(theta);
    const std::vector<double> f01{st.beta(0), st.beta(1)};
    const auto alpha01 = softmax_alpha(f01);
    const std::vector<double> f2{st.beta(2)};
    const auto alpha2 = softmax_alpha(f2);
    const double alpha[3] = {alpha01[0], alpha01[1], alpha2[0]};
    for (int j = 0; j < 3; ++j) {
      const Vector col = tot.draws.col(j);
      const double sd = std::sqrt((col.array() - col.mean()).square().sum() / (draws_n - 1));
      CHECK(std::abs(tot.mean(j) - alpha[j]) < 4.0 * sd / std::sqrt(draws_n));
      CHECK(tot.lower(j) <= tot.mean(j));
      CHECK(tot.upper(j) >= tot.mean(j));
    }
  }
}

TEST_CASE("prediction is reproducible across thread counts") {
  auto d = test::toy_dataset(9, 8, {{0, 1}, {2}}, 20);
  Model m(ModelSpec::from_name("LMC1-S-DM"), d);
  Rng rng = make_stream(24);
  Matrix draws(6, m.dimension());
  for (int r = 0; r < 6; ++r) draws.row(r) = test::random_state(m, rng).transpose();
  const auto mesh = build_mesh(Region::rectangle(0, 0, 20, 20), 25.0);
  PredictOptions a, b;
  a.threads = 1;
  b.threads = 3;
  const auto ca = predict_cover(m, draws, mesh, a);
  const auto cb = predict_cover(m, draws, mesh, b);
  for (int r = 0; r < 6; ++r) CHECK(ca.cover[static_cast<std::size_t>(r)] == cb.cover[static_cast<std::size_t>(r)]);
}

TEST_CASE("prediction outputs") {
  auto d = test::toy_dataset(9, 8, {{0, 1}, {2}}, 20);
  Model m(ModelSpec::from_name("IGP-S-DM"), d);
  Rng rng = make_stream(25);
  Matrix draws(4, m.dimension());
  for (int r = 0; r < 4; ++r) draws.row(r) = test::random_state(m, rng).transpose();
  Region r = Region::rectangle(0, 0, 12, 8);
  r.holes.push_back({{0, 0}, {4, 0}, {4, 4}, {0, 4}});
  const auto mesh = build_mesh(r, 4.0);
  const auto cov = predict_cover(m, draws, mesh, {});
  const auto tot = total_cover(cov, {{0, 1}, {2}}, {"g0", "g1"});
  const auto dir = std::filesystem::temp_directory_path() / "jsdm_predict_test";
  std::filesystem::remove_all(dir);
  write_prediction(dir.string(), mesh, cov, tot);

  std::ifstream grid(dir / "s0_mean.csv");
  std::string line;
  int rows = 0, na = 0;
  while (std::getline(grid, line)) {
    ++rows;
    for (std::size_t p = line.find("NA"); p != std::string::npos; p = line.find("NA", p + 1)) ++na;
  }
  CHECK(rows == 4);
  CHECK(na == 4);

  std::ifstream pgm(dir / "s0_mean.pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  CHECK(magic == "P5");
  CHECK(w == 6);
  CHECK(h == 4);
  CHECK(maxval == 65535);
  pgm.get();
  std::string payload((std::istreambuf_iterator<char>(pgm)), std::istreambuf_iterator<char>());
  CHECK(payload.size() == 6 * 4 * 2);

  std::ifstream totals(dir / "totals.csv");
  std::getline(totals, line);
  CHECK(line == "s0,s1,s2,group:g0,group:g1,all");
  CHECK(std::filesystem::exists(dir / "summary.json"));
  std::filesystem::remove_all(dir);
}
