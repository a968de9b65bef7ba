#pragma once

#include <utility>

#include "lskkf/linop.hpp"

namespace lskkf {

struct CgReport {
  int iterations = 0;
  double final_relative_residual = 0.0;
  bool converged = false;
};

struct CgOptions {
  double tol = 1e-8;     // relative residual
  int max_iter = 500;
};

/// Conjugate gradient for SPD operators, started from the zero vector.
/// Non-convergence is soft: returns the best iterate with converged=false.
/// NaN/Inf in the iterates is a hard NumericError.
std::pair<Vector, CgReport> cg_solve(const LinearOperator& op, const Vector& rhs,
                                     const CgOptions& opts = {});

/// The SPD system behind the measurement update: the operator
/// v -> v + L^T C^T R^-1 C L v, plus the map building its right-hand side
/// from an innovation, z -> L^T C^T R^-1 z.
class LskNormalSystem {
 public:
  LskNormalSystem(LinOp L, LinOp C, Vector r_inv_diag);

  const LinearOperator& normal_op() const { return *normal_; }
  LinOp normal_op_ptr() const { return normal_; }

  Vector rhs_from_innovation(const Vector& innovation) const;

 private:
  LinOp L_;
  LinOp C_;
  LinOp r_inv_;
  LinOp normal_;
};

LskNormalSystem lsk_normal_operator(LinOp L, LinOp C, Vector r_inv_diag);

/// Applies (R + Ybar Ybar^T)^-1 to each column of `residuals` through the
/// Woodbury identity: only an N x N dense factorization is formed.
Matrix woodbury_apply(const Vector& r_inv_diag, const Matrix& Ybar, const Matrix& residuals);

/// Cholesky solve for small dense SPD systems; guards the oracle paths.
Matrix dense_solve_spd(const Matrix& M, const Matrix& rhs, Index dense_cap = 2000);
Vector dense_solve_spd(const Matrix& M, const Vector& rhs, Index dense_cap = 2000);

}  // namespace lskkf
