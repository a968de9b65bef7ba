#include "lskkf/oracle.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>

#include "lskkf/solver.hpp"

namespace lskkf {

namespace {

void check_square(const Matrix& M, const char* name, Index n) {
  if (M.rows() != n || M.cols() != n)
    throw ShapeError(std::string(name) + ": expected " + std::to_string(n) + "x" +
                     std::to_string(n) + ", got " + std::to_string(M.rows()) + "x" +
                     std::to_string(M.cols()));
}

}  // namespace

KfState kf_step_dense(const Vector& x, const Matrix& P, const Matrix& A, const Matrix& B,
                      const Matrix& C, const Matrix& Q, const Matrix& R, const Vector& u,
                      const Vector& y) {
  const Index n = x.size();
  const Index m = y.size();
  check_square(P, "kf P", n);
  check_square(A, "kf A", n);
  check_square(Q, "kf Q", n);
  check_square(R, "kf R", m);
  if (C.rows() != m || C.cols() != n) throw ShapeError("kf C: shape mismatch");
  if (B.rows() != n || B.cols() != u.size()) throw ShapeError("kf B: shape mismatch");

  Vector x_prior = A * x;
  if (u.size() > 0) x_prior += B * u;
  Matrix P_prior = A * P * A.transpose() + Q;
  P_prior = 0.5 * (P_prior + P_prior.transpose());

  const Matrix S = C * P_prior * C.transpose() + R;
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success)
    throw NumericError("kf: innovation covariance is not positive definite");
  const Matrix K = llt.solve(C * P_prior).transpose();

  KfState out;
  out.x = x_prior + K * (y - C * x_prior);
  const Matrix ikc = Matrix::Identity(n, n) - K * C;
  Matrix P_post = ikc * P_prior * ikc.transpose() + K * R * K.transpose();
  out.P = 0.5 * (P_post + P_post.transpose());
  return out;
}

Vector lsq_kf_step_dense(const Vector& x, const Matrix& P_prior, const Matrix& A,
                         const Matrix& B, const Matrix& C, const Matrix& R, const Vector& u,
                         const Vector& y) {
  const Index n = x.size();
  check_square(P_prior, "lsq P", n);
  check_square(A, "lsq A", n);
  if (C.rows() != y.size() || C.cols() != n) throw ShapeError("lsq C: shape mismatch");

  Vector x_prior = A * x;
  if (u.size() > 0) x_prior += B * u;

  Eigen::LLT<Matrix> p_llt(P_prior);
  if (p_llt.info() != Eigen::Success)
    throw NumericError("lsq: prior covariance is not positive definite");
  Eigen::LLT<Matrix> r_llt(R);
  if (r_llt.info() != Eigen::Success)
    throw NumericError("lsq: measurement covariance is not positive definite");

  const Matrix crc = C.transpose() * r_llt.solve(C);
  const Matrix normal = p_llt.solve(Matrix::Identity(n, n)) + crc;
  const Vector rhs = C.transpose() * r_llt.solve(y - C * x_prior);
  const Vector d = dense_solve_spd(normal, rhs, n);
  return x_prior + d;
}

SteadyStateSolution riccati_steady_state(const Matrix& A, const Matrix& C, const Matrix& Q,
                                         const Matrix& R, const RiccatiOptions& opts) {
  const Index n = A.rows();
  check_square(A, "riccati A", n);
  check_square(Q, "riccati Q", n);
  check_square(R, "riccati R", C.rows());
  if (C.cols() != n) throw ShapeError("riccati C: shape mismatch");

  Matrix P = Matrix::Zero(n, n);
  double residual = 0.0;
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    const Matrix S = C * P * C.transpose() + R;
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success)
      throw NumericError("riccati: innovation covariance is not positive definite");
    const Matrix KCP = (C * P).transpose() * llt.solve(C * P);
    Matrix P_next = A * (P - KCP) * A.transpose() + Q;
    P_next = 0.5 * (P_next + P_next.transpose());

    const double denom = std::max(1.0, P_next.norm());
    residual = (P_next - P).norm() / denom;
    P = std::move(P_next);
    if (residual <= opts.tol) {
      SteadyStateSolution sol;
      sol.P_inf = P;
      const Matrix S_inf = C * P * C.transpose() + R;
      Eigen::LLT<Matrix> s_llt(S_inf);
      if (s_llt.info() != Eigen::Success)
        throw NumericError("riccati: steady innovation covariance is not positive definite");
      sol.K_inf = s_llt.solve(C * P).transpose();
      sol.iterations = iter;
      sol.residual = residual;
      return sol;
    }
  }
  throw NumericError("riccati: no convergence after " + std::to_string(opts.max_iter) +
                     " iterations, last relative change " + std::to_string(residual));
}

ScalarField conditional_expectation(const LinearOperator& L, const Grid& grid, Index b,
                                    double value) {
  grid.validate();
  if (L.rows() != grid.size())
    throw ShapeError("conditional expectation: operator rows != grid size");
  if (b < 0 || b >= L.rows())
    throw ShapeError("conditional expectation: index " + std::to_string(b) + " out of range");

  Vector e_b = Vector::Zero(L.rows());
  e_b[b] = 1.0;
  const Vector column = L.apply(L.apply_adjoint(e_b));
  const double variance = column[b];
  if (!(variance > 0.0))
    throw NumericError("conditional expectation: zero variance at the conditioning cell");
  return {grid, column * (value / variance)};
}

std::vector<Index> probe_indices(const MaskSet& masks, int per_material) {
  if (per_material < 1) throw ShapeError("probe set: per_material must be positive");
  std::vector<Index> probes;
  for (Index m = 0; m < masks.count(); ++m) {
    const std::vector<Index> cells = masks.indices_of(m);
    if (cells.empty()) continue;
    const Index take = std::min<Index>(per_material, static_cast<Index>(cells.size()));
    for (Index j = 0; j < take; ++j) {
      // Evenly spaced through the region, endpoints included.
      const Index pos =
          take == 1 ? 0 : (j * (static_cast<Index>(cells.size()) - 1)) / (take - 1);
      probes.push_back(cells[static_cast<size_t>(pos)]);
    }
  }
  return probes;
}

KernelFit fit_kernel_params(const SystemModel& small_model,
                            const std::vector<GaussianKernel>& candidates) {
  if (candidates.empty()) throw ShapeError("kernel fit: empty candidate set");
  const Index n = small_model.n_x();
  if (n > 4096) throw ShapeError("kernel fit: model too large for the dense path");

  const Matrix A = to_dense(*small_model.A);
  const Matrix C = to_dense(*small_model.C);
  const Matrix Lq = to_dense(*small_model.L_Q);
  const Matrix Q = Lq * Lq.transpose();
  const Matrix R = small_model.r_diag.asDiagonal();
  const SteadyStateSolution steady = riccati_steady_state(A, C, Q, R);

  const std::vector<Index> probes = probe_indices(small_model.masks);

  // Reference fields: column b of P_inf, normalized by its diagonal entry.
  std::vector<Vector> reference;
  reference.reserve(probes.size());
  for (Index b : probes) {
    const double variance = steady.P_inf(b, b);
    if (!(variance > 0.0))
      throw NumericError("kernel fit: steady covariance has a zero diagonal entry");
    reference.push_back(steady.P_inf.col(b) / variance);
  }

  KernelFit fit;
  fit.scores.reserve(candidates.size());
  double best = -1.0;
  for (const GaussianKernel& cand : candidates) {
    const LinOp L = make_masked_kernel(small_model.masks, cand, small_model.grid);
    double score = 0.0;
    for (size_t i = 0; i < probes.size(); ++i) {
      const ScalarField field =
          conditional_expectation(*L, small_model.grid, probes[i], 1.0);
      score += (field.values - reference[i]).squaredNorm();
    }
    fit.scores.push_back(score);
    // Score differences below relative 1e-9 count as ties; the scan order
    // below then decides, so sort-equivalent candidates resolve to the
    // smallest sigma, then the smallest gamma.
    const bool better = best < 0.0 || score < best * (1.0 - 1e-9);
    const bool tie = best >= 0.0 && !better && score <= best * (1.0 + 1e-9);
    const bool wins_tie =
        tie && (cand.sigma < fit.best.sigma ||
                (cand.sigma == fit.best.sigma && cand.gamma < fit.best.gamma));
    if (better || wins_tie) {
      best = best < 0.0 ? score : std::min(score, best);
      fit.best = cand;
      fit.best_score = score;
    }
  }

  // gamma^2 * S_b is the kernel's marginal variance at cell b for the fitted
  // sigma; equate its probe average with the steady covariance's.
  const LinOp unit =
      make_masked_kernel(small_model.masks, GaussianKernel{1.0, fit.best.sigma},
                         small_model.grid);
  double ratio = 0.0;
  for (Index b : probes) {
    Vector e_b = Vector::Zero(n);
    e_b[b] = 1.0;
    const double s_b = unit->apply(unit->apply_adjoint(e_b))[b];
    if (!(s_b > 0.0)) throw NumericError("kernel fit: degenerate kernel variance at a probe");
    ratio += steady.P_inf(b, b) / s_b;
  }
  fit.amplitude_gamma = std::sqrt(ratio / static_cast<double>(probes.size()));
  return fit;
}

Matrix factor_spd(const Matrix& M) {
  if (M.rows() != M.cols()) throw ShapeError("spd factor: matrix must be square");
  const Matrix sym = 0.5 * (M + M.transpose());
  Eigen::LDLT<Matrix> ldlt(sym);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("spd factor: LDLT factorization failed");
  // Clamp the slightly negative pivots a PSD-up-to-roundoff input produces.
  const Vector sqrt_d = ldlt.vectorD().array().max(0.0).sqrt().matrix();
  const Matrix scaled = Matrix(ldlt.matrixL()) * sqrt_d.asDiagonal();
  return ldlt.transpositionsP().transpose() * scaled;
}

}  // namespace lskkf
