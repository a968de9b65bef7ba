#include "lskkf/solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace lskkf {

std::pair<Vector, CgReport> cg_solve(const LinearOperator& op, const Vector& rhs,
                                     const CgOptions& opts) {
  if (op.rows() != op.cols())
    throw ShapeError("cg: operator must be square, got " + std::to_string(op.rows()) + "x" +
                     std::to_string(op.cols()));
  if (rhs.size() != op.cols())
    throw ShapeError("cg: rhs length " + std::to_string(rhs.size()) + " != operator size " +
                     std::to_string(op.cols()));

  const double rhs_norm = rhs.norm();
  CgReport report;
  if (rhs_norm == 0.0) {
    report.converged = true;
    return {Vector::Zero(rhs.size()), report};
  }

  Vector x = Vector::Zero(rhs.size());
  Vector r = rhs;  // residual of the zero initial guess
  Vector p = r;
  double rr = r.squaredNorm();

  Vector best_x = x;
  double best_res = std::sqrt(rr) / rhs_norm;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Vector ap = op.apply(p);
    const double p_ap = p.dot(ap);
    if (!std::isfinite(p_ap) || p_ap <= 0.0) {
      if (!std::isfinite(p_ap)) throw NumericError("cg: non-finite curvature p'Ap");
      throw NumericError("cg: non-positive curvature, operator is not SPD");
    }
    const double alpha = rr / p_ap;
    x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    if (!std::isfinite(rr_new)) throw NumericError("cg: non-finite residual");

    const double rel = std::sqrt(rr_new) / rhs_norm;
    report.iterations = iter + 1;
    if (rel < best_res) {
      best_res = rel;
      best_x = x;
    }
    if (rel <= opts.tol) {
      report.final_relative_residual = rel;
      report.converged = true;
      return {std::move(x), report};
    }
    const double beta = rr_new / rr;
    p = r + beta * p;
    rr = rr_new;
  }

  report.final_relative_residual = best_res;
  report.converged = false;
  return {std::move(best_x), report};
}

LskNormalSystem::LskNormalSystem(LinOp L, LinOp C, Vector r_inv_diag)
    : L_(std::move(L)), C_(std::move(C)) {
  if (!L_ || !C_) throw ShapeError("normal operator: null operand");
  if (C_->cols() != L_->rows())
    throw ShapeError("normal operator: C.cols " + std::to_string(C_->cols()) + " != L.rows " +
                     std::to_string(L_->rows()));
  if (r_inv_diag.size() != C_->rows())
    throw ShapeError("normal operator: R^-1 length " + std::to_string(r_inv_diag.size()) +
                     " != C.rows " + std::to_string(C_->rows()));
  if (!(r_inv_diag.array() > 0.0).all())
    throw ShapeError("normal operator: R^-1 entries must be positive");
  r_inv_ = make_diagonal(std::move(r_inv_diag));
  const LinOp cl = op_compose(C_, L_);
  normal_ = op_sum(make_identity(L_->cols()),
                   op_compose(op_adjoint(cl), op_compose(r_inv_, cl)));
}

Vector LskNormalSystem::rhs_from_innovation(const Vector& innovation) const {
  return L_->apply_adjoint(C_->apply_adjoint(r_inv_->apply(innovation)));
}

LskNormalSystem lsk_normal_operator(LinOp L, LinOp C, Vector r_inv_diag) {
  return LskNormalSystem(std::move(L), std::move(C), std::move(r_inv_diag));
}

Matrix woodbury_apply(const Vector& r_inv_diag, const Matrix& Ybar, const Matrix& residuals) {
  const Index n_y = r_inv_diag.size();
  const Index N = Ybar.cols();
  if (Ybar.rows() != n_y)
    throw ShapeError("woodbury: Ybar rows " + std::to_string(Ybar.rows()) + " != R size " +
                     std::to_string(n_y));
  if (residuals.rows() != n_y)
    throw ShapeError("woodbury: residual rows " + std::to_string(residuals.rows()) +
                     " != R size " + std::to_string(n_y));

  // (R + Y Y')^-1 B = R^-1 B - R^-1 Y (I + Y' R^-1 Y)^-1 Y' R^-1 B
  const Matrix r_inv_res = r_inv_diag.asDiagonal() * residuals;
  if (N == 0) return r_inv_res;
  const Matrix r_inv_Y = r_inv_diag.asDiagonal() * Ybar;
  Matrix core = Matrix::Identity(N, N) + Ybar.transpose() * r_inv_Y;
  Eigen::LLT<Matrix> llt(core);
  if (llt.info() != Eigen::Success)
    throw NumericError("woodbury: Cholesky of the N x N core failed (non-finite inputs?)");
  return r_inv_res - r_inv_Y * llt.solve(Ybar.transpose() * r_inv_res);
}

Matrix dense_solve_spd(const Matrix& M, const Matrix& rhs, Index dense_cap) {
  if (M.rows() != M.cols())
    throw ShapeError("dense spd: matrix must be square, got " + std::to_string(M.rows()) + "x" +
                     std::to_string(M.cols()));
  if (M.rows() > dense_cap)
    throw ShapeError("dense spd: dimension " + std::to_string(M.rows()) +
                     " exceeds dense cap " + std::to_string(dense_cap));
  if (rhs.rows() != M.rows())
    throw ShapeError("dense spd: rhs rows " + std::to_string(rhs.rows()) + " != matrix size " +
                     std::to_string(M.rows()));
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success)
    throw NumericError("dense spd: Cholesky failed, matrix is not positive definite");
  return llt.solve(rhs);
}

Vector dense_solve_spd(const Matrix& M, const Vector& rhs, Index dense_cap) {
  return Vector(dense_solve_spd(M, Matrix(rhs), dense_cap));
}

}  // namespace lskkf
