#include "jsdm/linalg.hpp"

#include "jsdm/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace jsdm {

bool try_cholesky_with_jitter(const Matrix& a, double rel_jitter, int max_escalations,
                              JitteredCholesky& out) {
  const Eigen::Index n = a.rows();
  if (n == 0 || a.cols() != n) return false;
  const double mean_diag = std::max(a.diagonal().mean(), 0.0);
  double jitter = rel_jitter * (mean_diag > 0.0 ? mean_diag : 1.0);
  Matrix work(n, n);
  for (int attempt = 0; attempt <= max_escalations; ++attempt) {
    work = a;
    work.diagonal().array() += jitter;
    Eigen::LLT<Matrix, Eigen::Lower> llt(work);
    if (llt.info() == Eigen::Success) {
      Matrix l = llt.matrixL();
      if (l.allFinite()) {
        out.lower = std::move(l);
        out.jitter = jitter;
        out.escalations = attempt;
        return true;
      }
    }
    jitter *= 10.0;
  }
  return false;
}

JitteredCholesky cholesky_with_jitter(const Matrix& a, double rel_jitter, int max_escalations,
                                      const std::string& context) {
  JitteredCholesky out;
  if (!try_cholesky_with_jitter(a, rel_jitter, max_escalations, out)) {
    std::ostringstream msg;
    msg << "Cholesky failed for " << context << " (n=" << a.rows() << ", max jitter "
        << rel_jitter * std::pow(10.0, max_escalations) << " x mean diagonal)";
    throw NumericalError(msg.str());
  }
  return out;
}

namespace {

// Level-2 sweep, operating in place on the lower triangle of abar.
template <typename LType, typename AType>
void chol_rev_unblocked(const Eigen::MatrixBase<LType>& l, Eigen::MatrixBase<AType>& abar) {
  const Eigen::Index n = l.rows();
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const Eigen::Index below = n - j - 1;
    const double d = l(j, j);
    auto r = l.row(j).head(j);
    auto b = l.bottomLeftCorner(below, j);
    auto c = l.col(j).tail(below);

    double& dbar = abar(j, j);
    auto rbar = abar.row(j).head(j);
    auto bbar = abar.bottomLeftCorner(below, j);
    auto cbar = abar.col(j).tail(below);

    dbar -= c.dot(cbar) / d;
    dbar /= d;
    cbar /= d;
    rbar -= dbar * r + cbar.transpose() * b;
    bbar.noalias() -= cbar * r;
    dbar /= 2.0;
  }
}

}  // namespace

Matrix cholesky_reverse(const Matrix& lower, const Matrix& lower_adjoint, int block) {
  const Eigen::Index n = lower.rows();
  Matrix abar = lower_adjoint.triangularView<Eigen::Lower>();
  if (block <= 0 || block >= n) {
    chol_rev_unblocked(lower, abar);
    return abar;
  }
  for (Eigen::Index k = n; k > 0; k -= block) {
    const Eigen::Index j = std::max<Eigen::Index>(0, k - block);
    const Eigen::Index nb = k - j;
    const Eigen::Index below = n - k;

    auto r = lower.block(j, 0, nb, j);
    auto d = lower.block(j, j, nb, nb);
    auto b = lower.block(k, 0, below, j);
    auto c = lower.block(k, j, below, nb);

    auto rbar = abar.block(j, 0, nb, j);
    auto dbar = abar.block(j, j, nb, nb);
    auto bbar = abar.block(k, 0, below, j);
    auto cbar = abar.block(k, j, below, nb);

    if (below > 0) {
      // cbar <- cbar * D^{-1}
      d.triangularView<Eigen::Lower>().solveInPlace<Eigen::OnTheRight>(cbar);
      bbar.noalias() -= cbar * r;
      dbar.triangularView<Eigen::Lower>() -= (cbar.transpose() * c);
    }
    Matrix dblock = dbar.triangularView<Eigen::Lower>();
    Matrix dfactor = d;
    chol_rev_unblocked(dfactor, dblock);
    dbar.triangularView<Eigen::Lower>() = dblock;
    Matrix dsym = dblock + dblock.transpose();
    if (below > 0) rbar.noalias() -= cbar.transpose() * b;
    rbar.noalias() -= dsym * r;
  }
  return abar;
}

double log_det_from_cholesky(const Matrix& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

}  // namespace jsdm
