#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lskkf/linop.hpp"

namespace lskkf {

struct Material {
  double rho;  // kg/m^3
  double c;    // J/(kg K)
  double k;    // W/(m K)
};

/// Physical description of the two-material phantom analog.
struct MaterialConfig {
  Grid grid;
  std::vector<Material> materials;  // one per mask, same order
  MaskSet masks;                    // disjoint and covering
  double boundary_h = 0.0;          // W/(m^2 K), convective loss on the outer boundary
  std::vector<ScalarField> loads;   // heat loads b_i in W/m^3 per unit input
  double dt = 93.0;                 // seconds
};

struct NoiseConfig {
  double process_scale = 0.0;   // L_Q = process_scale * masked Gaussian kernel
  GaussianKernel process_kernel{1.0, 1.0};
  // Magnitude of the process noise the observers are designed against. The
  // simulated disturbances use process_scale; the uncertainty model shared by
  // the observers uses design_scale. Negative means follow process_scale.
  double design_scale = -1.0;
  double r_default = 0.05;      // measurement variance, K^2
  std::vector<std::pair<Index, double>> r_overrides;  // (output index, variance)
};

/// Discrete-time LTI system x_{k+1} = A x_k + B u_k + w_k, y_k = C x_k + eta_k,
/// with Q = L_Q L_Q^T and R = diag(r_diag). A is held matrix-free.
struct SystemModel {
  LinOp A;
  Matrix B;            // n_x x n_u (dense; n_u is tiny)
  LinOp C;             // row selection of measured cells
  LinOp L_Q;           // process-noise factor
  Vector r_diag;       // measurement-noise variances
  Grid grid;
  MaskSet masks;
  double dt = 0.0;
  std::vector<Index> measured_indices;

  Index n_x() const { return A ? A->rows() : 0; }
  Index n_y() const { return r_diag.size(); }
  Index n_u() const { return B.cols(); }
};

/// Discretizes the heat equation (finite-volume fluxes, harmonic conductivity
/// averaging across material interfaces, Robin boundary) and wraps the
/// implicit-Euler step as a matrix-free operator backed by a sparse
/// factorization computed once here.
SystemModel assemble_system(const MaterialConfig& cfg, const ScalarField& measurement_mask,
                            const NoiseConfig& noise);

/// Row-selection operator picking `indices` out of a length-n vector.
LinOp make_selection(Index n, const std::vector<Index>& indices);

struct Trajectory {
  std::vector<Vector> states;   // x_0 .. x_K
  std::vector<Vector> inputs;   // u_0 .. u_{K-1}
  std::vector<Vector> outputs;  // y_1 .. y_K
  std::uint64_t seed = 0;
};

/// Simulates x_{k+1} = A x_k + B u_k + L_Q v_k, y_k = C x_k + eta_k with
/// v_k ~ N(0, I) and eta_k ~ N(0, diag(r_diag)); bit-reproducible from seed.
Trajectory simulate_truth(const SystemModel& model, const std::vector<Vector>& inputs,
                          int steps, std::uint64_t seed, const Vector& x0 = Vector());

/// The case-study input schedule: u_1 on for 2 <= k <= 7, u_2 for 8 <= k <= 15.
Eigen::Vector2d input_sequence(int k);

/// Orthonormal POD basis from snapshot columns; keeps the smallest rank whose
/// squared singular values reach `energy_fraction` of the total.
Matrix pod_reduce(const Matrix& snapshots, double energy_fraction);

struct RomMatrices {
  Matrix A_r;
  Matrix B_r;
  Matrix C_r;
  Matrix Q_r;
};

/// Projects the model onto span(V) column-by-column with matrix-free applies:
/// A_r = V'AV, B_r = V'B, C_r = CV, Q_r = (L_Q V)'(L_Q V).
RomMatrices project_rom(const SystemModel& model, const Matrix& V);

/// Deterministic input-driven snapshots for POD: impulse and held-step
/// responses of each input column, concatenated.
Matrix pod_snapshots(const SystemModel& model, int steps_per_input);

/// Writes states as SF1 per-step files plus a CSV manifest into `dir`.
void export_trajectory(const Trajectory& traj, const Grid& grid, const std::string& dir);

}  // namespace lskkf
