#include "lskkf/observers.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace lskkf {

LskkfObserver::LskkfObserver(const SystemModel& model, LinOp covariance_factor,
                             CgOptions options)
    : model_(&model),
      covariance_factor_(covariance_factor),
      system_(std::move(covariance_factor), model.C, model.r_diag.cwiseInverse()),
      options_(options),
      x_(Vector::Zero(model.n_x())) {}

void LskkfObserver::step(const Vector& u_prev, const Vector& y) {
  Vector prior = model_->A->apply(x_);
  if (model_->n_u() > 0) prior += model_->B * u_prev;
  const Vector innovation = y - model_->C->apply(prior);
  const Vector rhs = system_.rhs_from_innovation(innovation);
  auto [d, report] = cg_solve(system_.normal_op(), rhs, options_);
  last_report_ = report;
  x_ = prior + covariance_factor_->apply(d);
}

EnkfObserver::EnkfObserver(const SystemModel& model, int ensemble_size, std::uint64_t seed,
                           bool literal_innovation)
    : model_(&model),
      ensemble_(model.n_x(), ensemble_size),
      process_rng_(substream_seed(seed, 11)),
      obs_rng_(substream_seed(seed, 12)),
      literal_innovation_(literal_innovation) {
  if (ensemble_size < 2) throw ShapeError("enkf: ensemble size must be at least 2");
  SplitMix64 init(substream_seed(seed, 10));
  for (Index j = 0; j < ensemble_.cols(); ++j)
    ensemble_.col(j) = model.L_Q->apply(init.normal_vector(model.L_Q->cols()));
}

void EnkfObserver::step(const Vector& u_prev, const Vector& y) {
  const Index n = ensemble_.cols();

  // Forecast every member with its own process noise draw.
  for (Index j = 0; j < n; ++j) {
    Vector x = model_->A->apply(ensemble_.col(j));
    if (model_->n_u() > 0) x += model_->B * u_prev;
    x += model_->L_Q->apply(process_rng_.normal_vector(model_->L_Q->cols()));
    ensemble_.col(j) = x;
  }

  const Vector mean = ensemble_.rowwise().mean();
  const double scale = 1.0 / std::sqrt(static_cast<double>(n - 1));
  Matrix anomalies = (ensemble_.colwise() - mean) * scale;
  Matrix obs_anomalies(model_->n_y(), n);
  for (Index j = 0; j < n; ++j) obs_anomalies.col(j) = model_->C->apply(anomalies.col(j));

  // A spread at roundoff level means every member agrees: the sample
  // covariance, and with it the gain, is numerically zero. Comparing against
  // the ensemble magnitude keeps the test scale-free.
  if (obs_anomalies.norm() <= 1e-12 * std::max(1.0, ensemble_.norm())) {
    collapsed_ = true;
    return;
  }

  // Innovations per member; the perturbed-observation form adds N(0, R) noise
  // to y so the analysis ensemble keeps the right posterior spread.
  const Vector r_std = model_->r_diag.cwiseSqrt();
  Matrix innovations(model_->n_y(), n);
  if (literal_innovation_) {
    innovations = (-obs_anomalies).colwise() + y;
  } else {
    for (Index j = 0; j < n; ++j) {
      const Vector eta =
          (r_std.array() * obs_rng_.normal_vector(model_->n_y()).array()).matrix();
      innovations.col(j) = y + eta - model_->C->apply(ensemble_.col(j));
    }
  }

  // K delta = Xa Ya^T (Ya Ya^T + R)^-1 delta, with the inverse applied through
  // the Woodbury identity so only an ensemble-sized core is factorized.
  const Matrix weighted =
      woodbury_apply(model_->r_diag.cwiseInverse(), obs_anomalies, innovations);
  ensemble_ += anomalies * (obs_anomalies.transpose() * weighted);
}

RomkfObserver::RomkfObserver(const SystemModel& model, Matrix basis, RomMatrices rom)
    : model_(&model),
      basis_(std::move(basis)),
      rom_(std::move(rom)),
      z_(Vector::Zero(rom_.A_r.rows())),
      P_(Matrix::Zero(rom_.A_r.rows(), rom_.A_r.rows())),
      r_diag_(model.r_diag) {
  if (basis_.rows() != model.n_x() || basis_.cols() != rom_.A_r.rows())
    throw ShapeError("rom-kf: basis shape does not match reduced matrices");
}

void RomkfObserver::step(const Vector& u_prev, const Vector& y) {
  // Reduced predict.
  Vector z_prior = rom_.A_r * z_;
  if (rom_.B_r.cols() > 0) z_prior += rom_.B_r * u_prev;
  Matrix P_prior = rom_.A_r * P_ * rom_.A_r.transpose() + rom_.Q_r;
  P_prior = 0.5 * (P_prior + P_prior.transpose());

  // Information-form gain K = (C_r^T R^-1 C_r + P^-1)^-1 C_r^T R^-1.
  const Matrix cr_rinv = rom_.C_r.transpose() * r_diag_.cwiseInverse().asDiagonal();
  const Index n_r = P_prior.rows();
  Eigen::LDLT<Matrix> prior_ldlt(P_prior);
  Matrix p_inv;
  if (prior_ldlt.info() == Eigen::Success && prior_ldlt.isPositive()) {
    p_inv = prior_ldlt.solve(Matrix::Identity(n_r, n_r));
  } else {
    // Startup covariance can be singular; a tiny ridge keeps the information
    // matrix well posed without changing converged behavior.
    Eigen::LDLT<Matrix> ridged(P_prior + 1e-12 * Matrix::Identity(n_r, n_r));
    if (ridged.info() != Eigen::Success)
      throw NumericError("rom-kf: prior covariance factorization failed");
    p_inv = ridged.solve(Matrix::Identity(n_r, n_r));
  }
  const Matrix info = cr_rinv * rom_.C_r + p_inv;
  Eigen::LDLT<Matrix> info_ldlt(info);
  if (info_ldlt.info() != Eigen::Success)
    throw NumericError("rom-kf: information matrix factorization failed");
  const Matrix gain = info_ldlt.solve(cr_rinv);

  z_ = z_prior + gain * (y - rom_.C_r * z_prior);
  Matrix P_post = (Matrix::Identity(n_r, n_r) - gain * rom_.C_r) * P_prior;
  P_ = 0.5 * (P_post + P_post.transpose());
}

LuenbergerObserver::LuenbergerObserver(const SystemModel& model, Vector gain_diag)
    : model_(&model), gain_diag_(std::move(gain_diag)), x_(Vector::Zero(model.n_x())) {
  if (gain_diag_.size() != model.n_y())
    throw ShapeError("luenberger: gain length must equal the output count");
}

void LuenbergerObserver::step(const Vector& u_prev, const Vector& y) {
  Vector prior = model_->A->apply(x_);
  if (model_->n_u() > 0) prior += model_->B * u_prev;
  const Vector innovation = y - model_->C->apply(prior);
  x_ = prior + model_->C->apply_adjoint((gain_diag_.array() * innovation.array()).matrix());
}

LuenbergerDesign design_luenberger_gain(const SystemModel& model, int num_draws,
                                        std::uint64_t seed) {
  if (num_draws < 1) throw ShapeError("luenberger design: need at least one draw");
  SplitMix64 rng(seed);
  double acc = 0.0;
  for (int i = 0; i < num_draws; ++i)
    acc += model.L_Q->apply(rng.normal_vector(model.L_Q->cols())).squaredNorm();
  LuenbergerDesign design;
  design.process_power = acc / (static_cast<double>(num_draws) * model.n_x());
  design.gain_diag =
      (design.process_power / (design.process_power + model.r_diag.array())).matrix();
  return design;
}

}  // namespace lskkf
