#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "lskkf/model.hpp"
#include "lskkf/rng.hpp"
#include "lskkf/solver.hpp"

namespace lskkf {

/// Recursive state observer: predict with the model, assimilate one
/// measurement vector per step.
class Observer {
 public:
  virtual ~Observer() = default;

  /// Advance one step with the input applied over the previous interval,
  /// then assimilate the measurement y taken at the new time.
  virtual void step(const Vector& u_prev, const Vector& y) = 0;

  virtual Vector current_estimate() const = 0;
  virtual std::string_view name() const = 0;
};

/// Kernel-regularized least-squares Kalman filter. The steady-state update
/// x+ = x- + L d* solves (I + L^T C^T R^-1 C L) d = L^T C^T R^-1 (y - C x-)
/// by conjugate gradient, touching the state only through operator applies.
class LskkfObserver final : public Observer {
 public:
  LskkfObserver(const SystemModel& model, LinOp covariance_factor, CgOptions options = {});

  void step(const Vector& u_prev, const Vector& y) override;
  Vector current_estimate() const override { return x_; }
  std::string_view name() const override { return "lsk-kf"; }

  /// Solver report for the most recent update.
  const CgReport& last_solve() const { return last_report_; }

 private:
  const SystemModel* model_;
  LinOp covariance_factor_;
  LskNormalSystem system_;
  CgOptions options_;
  Vector x_;
  CgReport last_report_{};
};

/// Stochastic ensemble Kalman filter. The gain is applied through the
/// anomaly factorization, so only ensemble-sized matrices are formed.
class EnkfObserver final : public Observer {
 public:
  /// literal_innovation = false perturbs each member's observation
  /// (y + eta_j - C x_j); true reuses the raw anomaly residual for every
  /// member. The perturbed form is the one with the right update statistics.
  EnkfObserver(const SystemModel& model, int ensemble_size, std::uint64_t seed,
               bool literal_innovation = false);

  void step(const Vector& u_prev, const Vector& y) override;
  Vector current_estimate() const override { return ensemble_.rowwise().mean(); }
  std::string_view name() const override { return "enkf"; }

  const Matrix& ensemble() const { return ensemble_; }
  bool collapsed() const { return collapsed_; }

 private:
  const SystemModel* model_;
  Matrix ensemble_;
  SplitMix64 process_rng_;
  SplitMix64 obs_rng_;
  bool literal_innovation_;
  bool collapsed_ = false;
};

/// Reduced-order Kalman filter in a fixed projection basis V. Runs the
/// time-varying Riccati recursion on the n_r-dimensional reduced state.
class RomkfObserver final : public Observer {
 public:
  RomkfObserver(const SystemModel& model, Matrix basis, RomMatrices rom);

  void step(const Vector& u_prev, const Vector& y) override;
  Vector current_estimate() const override { return basis_ * z_; }
  std::string_view name() const override { return "rom-kf"; }

  const Vector& reduced_state() const { return z_; }
  const Matrix& reduced_covariance() const { return P_; }

 private:
  const SystemModel* model_;
  Matrix basis_;
  RomMatrices rom_;
  Vector z_;
  Matrix P_;
  Vector r_diag_;
};

/// Static-gain Luenberger observer x+ = x- + C^T D (y - C x-) with a
/// diagonal gain D.
class LuenbergerObserver final : public Observer {
 public:
  LuenbergerObserver(const SystemModel& model, Vector gain_diag);

  void step(const Vector& u_prev, const Vector& y) override;
  Vector current_estimate() const override { return x_; }
  std::string_view name() const override { return "luenberger"; }

  const Vector& gain() const { return gain_diag_; }

 private:
  const SystemModel* model_;
  Vector gain_diag_;
  Vector x_;
};

struct LuenbergerDesign {
  double process_power = 0.0;  ///< scalar d, the per-cell process noise power
  Vector gain_diag;            ///< D_ii = d / (d + r_i)
};

/// Scalar-matched gain: d estimates trace(Q)/n_x by averaging ||L_Q v||^2 / n_x
/// over standard normal draws, then D balances d against each output's
/// measurement variance.
LuenbergerDesign design_luenberger_gain(const SystemModel& model, int num_draws = 500,
                                        std::uint64_t seed = 0x1ce5);

}  // namespace lskkf
