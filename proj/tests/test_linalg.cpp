#include "jsdm/errors.hpp"
#include "jsdm/linalg.hpp"
#include "jsdm/random.hpp"
#include "support.hpp"

#include <Eigen/Dense>
#include <doctest.h>

using namespace jsdm;

namespace {

Matrix random_spd(Rng& rng, int n) {
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = standard_normal(rng);
  return a * a.transpose() + n * Matrix::Identity(n, n);
}

// F(A) = sum W .* chol(A) for a fixed lower-triangular weight W; A is
// rebuilt symmetric from its lower triangle.
double weighted_chol(const Matrix& lower_a, const Matrix& w) {
  Matrix a = lower_a.triangularView<Eigen::Lower>();
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  Eigen::LLT<Matrix> llt(a);
  Matrix l = llt.matrixL();
  return (l.array() * w.array()).sum();
}

}  // namespace

TEST_CASE("cholesky_with_jitter handles coincident points") {
  Matrix a = Matrix::Ones(2, 2);
  auto c = cholesky_with_jitter(a);
  CHECK(c.jitter > 0.0);
  Matrix back = c.lower * c.lower.transpose();
  CHECK(std::abs(back(0, 1) - 1.0) < 1e-12);
  CHECK(std::abs(back(0, 0) - 1.0 - c.jitter) < 1e-12);
}

TEST_CASE("cholesky_with_jitter reports failure") {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(cholesky_with_jitter(a, 1e-8, 4, "test"), NumericalError);
  JitteredCholesky out;
  CHECK_FALSE(try_cholesky_with_jitter(a, 1e-8, 4, out));
}

TEST_CASE("cholesky_reverse matches finite differences") {
  Rng rng = make_stream(11);
  for (int n : {1, 3, 7, 20}) {
    for (int block : {0, 2, 5, 64}) {
      Matrix a = random_spd(rng, n);
      Matrix w = Matrix::Zero(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) w(i, j) = standard_normal(rng);
      Eigen::LLT<Matrix> llt(a);
      Matrix l = llt.matrixL();
      Matrix abar = cholesky_reverse(l, w, block);
      const double h = 1e-6;
      double worst = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
          Matrix ap = a, am = a;
          ap(i, j) += h;
          am(i, j) -= h;
          const double fd = (weighted_chol(ap, w) - weighted_chol(am, w)) / (2 * h);
          worst = std::max(worst, std::abs(fd - abar(i, j)) / std::max(1.0, std::abs(fd)));
        }
      CHECK(worst < 1e-6);
      // strictly upper part is zero
      CHECK(abar.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm() == 0.0);
    }
  }
}

TEST_CASE("blocked and unblocked reverse sweeps agree") {
  Rng rng = make_stream(12);
  const int n = 37;
  Matrix a = random_spd(rng, n);
  Matrix w = Matrix::Random(n, n).triangularView<Eigen::Lower>();
  Matrix l = Eigen::LLT<Matrix>(a).matrixL();
  const Matrix ref = cholesky_reverse(l, w, 0);
  for (int block : {1, 4, 8, 16, 36})
    CHECK((cholesky_reverse(l, w, block) - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("log_det_from_cholesky") {
  Matrix a(2, 2);
  a << 4.0, 2.0, 2.0, 3.0;
  Matrix l = Eigen::LLT<Matrix>(a).matrixL();
  CHECK(log_det_from_cholesky(l) == doctest::Approx(std::log(8.0)).epsilon(1e-14));
}
