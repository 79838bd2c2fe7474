#pragma once

#include <Eigen/Core>

#include <string>

namespace jsdm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct JitteredCholesky {
  Matrix lower;         // L with L L^T = A + jitter * I
  double jitter = 0.0;  // absolute value added to the diagonal
  int escalations = 0;
};

// Cholesky of a symmetric matrix with diagonal jitter.  The first attempt adds
// rel_jitter * mean(diag); on failure the jitter grows by 10x, at most
// max_escalations times.  Throws NumericalError naming `context` if every
// attempt fails.
JitteredCholesky cholesky_with_jitter(const Matrix& a, double rel_jitter = 1e-8,
                                      int max_escalations = 4,
                                      const std::string& context = "covariance");

// Same as above but returns false instead of throwing.
bool try_cholesky_with_jitter(const Matrix& a, double rel_jitter, int max_escalations,
                              JitteredCholesky& out);

// Reverse-mode differentiation through A = L L^T.
//
// Given the lower factor L and the adjoint dF/dL (lower triangle used),
// returns the lower-triangular adjoint Abar with
//     dF = sum_{i >= j} Abar(i, j) dA(i, j)
// for perturbations of the lower triangle of A (the factorization reads only
// the lower triangle).  Blocked level-3 form; block size <= 0 selects the
// unblocked level-2 sweep.
Matrix cholesky_reverse(const Matrix& lower, const Matrix& lower_adjoint, int block = 64);

// log det(L L^T) = 2 sum log L_ii
double log_det_from_cholesky(const Matrix& lower);

}  // namespace jsdm
