#pragma once

#include <vector>

#include "lskkf/linop.hpp"
#include "lskkf/model.hpp"

namespace lskkf {

/// Dense reference implementations for small systems. Everything here forms
/// explicit matrices and is meant to cross-check the matrix-free paths, fit
/// kernel parameters, and seed the steady-state covariance factor.

struct KfState {
  Vector x;
  Matrix P;  // posterior covariance, symmetrized
};

/// One exact Kalman step: predict with (A, B, Q), update with (C, R, y).
/// Joseph-form covariance update.
KfState kf_step_dense(const Vector& x, const Matrix& P, const Matrix& A, const Matrix& B,
                      const Matrix& C, const Matrix& Q, const Matrix& R, const Vector& u,
                      const Vector& y);

/// The least-squares form of the same measurement update: with prior mean
/// x_bar = A x + B u and prior covariance P_prior, solves
/// (P_prior^-1 + C^T R^-1 C) d = C^T R^-1 (y - C x_bar) and returns x_bar + d.
/// Algebraically identical to the Kalman state update.
Vector lsq_kf_step_dense(const Vector& x, const Matrix& P_prior, const Matrix& A,
                         const Matrix& B, const Matrix& C, const Matrix& R, const Vector& u,
                         const Vector& y);

struct SteadyStateSolution {
  Matrix P_inf;        // prediction-form steady covariance
  Matrix K_inf;        // steady gain P C^T (C P C^T + R)^-1
  int iterations = 0;
  double residual = 0.0;  // relative Frobenius change of the last iteration
};

struct RiccatiOptions {
  double tol = 1e-10;
  int max_iter = 100000;
};

/// Fixed-point iteration P <- A (P - P C^T (C P C^T + R)^-1 C P) A^T + Q from
/// P = 0 until the relative Frobenius change drops below tol. Exceeding
/// max_iter is a hard error carrying the last residual.
SteadyStateSolution riccati_steady_state(const Matrix& A, const Matrix& C, const Matrix& Q,
                                         const Matrix& R, const RiccatiOptions& opts = {});

/// E(v | v_b = value) for v ~ N(0, L L^T): column b of L L^T scaled by
/// value / (L L^T)_bb, computed with one adjoint and one forward apply.
ScalarField conditional_expectation(const LinearOperator& L, const Grid& grid, Index b,
                                    double value);

/// Deterministic probe set: up to `per_material` evenly spaced cells from
/// each material region, in mask order.
std::vector<Index> probe_indices(const MaskSet& masks, int per_material = 8);

struct KernelFit {
  GaussianKernel best{1.0, 1.0};
  double best_score = 0.0;
  std::vector<double> scores;  // aligned with the candidate list
  // The conditional-expectation score is normalized, so it fixes the shape
  // (sigma) but not the scale. This gamma additionally matches the kernel's
  // marginal variance to the steady covariance's at the probe cells, using
  // the winning sigma.
  double amplitude_gamma = 0.0;
};

/// Grid-search fit of the masked-kernel parameters against the dense
/// steady-state covariance of a small model: each candidate is scored by the
/// summed squared mismatch of conditional-expectation fields over the probe
/// set. Ties go to the smallest sigma, then the smallest gamma.
KernelFit fit_kernel_params(const SystemModel& small_model,
                            const std::vector<GaussianKernel>& candidates);

/// Factor M = F F^T for a symmetric positive semidefinite M, tolerating the
/// tiny negative eigenvalues roundoff leaves in converged Riccati solutions.
Matrix factor_spd(const Matrix& M);

}  // namespace lskkf
