#include "lskkf/model.hpp"

#include <Eigen/SparseCholesky>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "lskkf/rng.hpp"

namespace lskkf {

namespace {

/// Implicit-Euler step operator A = (M + dt K)^-1 M held as "solve the
/// factorized sparse SPD system, then scale": never formed densely.
/// Adjoint: A^T = M (M + dt K)^-1 since M and K are symmetric.
class ImplicitStepOp final : public LinearOperator {
 public:
  ImplicitStepOp(Vector m_diag, const Eigen::SparseMatrix<double>& step_matrix)
      : LinearOperator(m_diag.size(), m_diag.size()), m_diag_(std::move(m_diag)) {
    auto solver = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    solver->compute(step_matrix);
    if (solver->info() != Eigen::Success)
      throw NumericError("implicit step: sparse factorization of M + dt*K failed");
    solver_ = std::move(solver);
  }

  std::string_view kind() const override { return "implicit_step"; }

 protected:
  Vector do_apply(const Vector& v) const override {
    return solver_->solve((m_diag_.array() * v.array()).matrix());
  }
  Vector do_apply_adjoint(const Vector& v) const override {
    return (m_diag_.array() * solver_->solve(v).array()).matrix();
  }

 private:
  Vector m_diag_;
  std::shared_ptr<const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> solver_;
};

class SelectionOp final : public LinearOperator {
 public:
  SelectionOp(Index n, std::vector<Index> indices)
      : LinearOperator(static_cast<Index>(indices.size()), n), indices_(std::move(indices)) {
    for (Index i : indices_)
      if (i < 0 || i >= n) throw ShapeError("sparse: selection index out of range");
  }

  // A selection matrix is sparse with a single unit entry per row.
  std::string_view kind() const override { return "sparse"; }

 protected:
  Vector do_apply(const Vector& v) const override {
    Vector out(rows());
    for (Index r = 0; r < rows(); ++r) out[r] = v[indices_[static_cast<size_t>(r)]];
    return out;
  }
  Vector do_apply_adjoint(const Vector& v) const override {
    Vector out = Vector::Zero(cols());
    for (Index r = 0; r < rows(); ++r) out[indices_[static_cast<size_t>(r)]] += v[r];
    return out;
  }

 private:
  std::vector<Index> indices_;
};

double spectral_radius_estimate(const LinearOperator& op, int iters, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Vector v = rng.normal_vector(op.cols());
  v.normalize();
  double lambda = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vector w = op.apply(v);
    lambda = w.norm();
    if (lambda == 0.0) return 0.0;
    v = w / lambda;
  }
  return lambda;
}

}  // namespace

LinOp make_selection(Index n, const std::vector<Index>& indices) {
  return std::make_shared<SelectionOp>(n, indices);
}

SystemModel assemble_system(const MaterialConfig& cfg, const ScalarField& measurement_mask,
                            const NoiseConfig& noise) {
  cfg.grid.validate();
  if (!(cfg.dt > 0.0)) throw ShapeError("model.dt: must be positive");
  if (cfg.masks.count() == 0 || !cfg.masks.covering())
    throw ShapeError("model.masks: masks must cover every grid cell");
  if (static_cast<Index>(cfg.materials.size()) != cfg.masks.count())
    throw ShapeError("model.materials: need one material per mask");
  for (const auto& m : cfg.materials)
    if (!(m.rho > 0.0 && m.c > 0.0 && m.k > 0.0))
      throw ShapeError("model.materials: rho, c, k must be positive");
  if (cfg.boundary_h < 0.0) throw ShapeError("model.boundary_h: must be non-negative");
  if (!(cfg.masks.grid() == cfg.grid))
    throw ShapeError("model.masks: masks are not on the model grid");
  if (measurement_mask.grid.size() != cfg.grid.size())
    throw ShapeError("model.measurement_mask: wrong grid");

  const Index n = cfg.grid.size();
  const double cell_volume = cfg.grid.cell_volume();

  // Per-cell material properties.
  Vector rho_c(n), conductivity(n);
  for (Index i = 0; i < n; ++i) {
    const int mat = cfg.masks.material_of(i);
    if (mat < 0) throw ShapeError("model.masks: cell " + std::to_string(i) + " uncovered");
    const auto& m = cfg.materials[static_cast<size_t>(mat)];
    rho_c[i] = m.rho * m.c;
    conductivity[i] = m.k;
  }

  // Finite-volume stiffness: conductance A_face * k_harm / dx between cell
  // neighbors, harmonic k across interfaces; Robin loss h * A_face on outer
  // faces. Flux form keeps rows of K summing to the boundary term only, which
  // is what conserves energy when h = 0.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(n) * 8);
  Vector diag = Vector::Zero(n);
  for (Index flat = 0; flat < n; ++flat) {
    const auto idx = cfg.grid.unflatten(flat);
    for (int d = 0; d < cfg.grid.dims; ++d) {
      const auto a = static_cast<size_t>(d);
      const double dx = cfg.grid.spacing[a];
      const double face_area = cell_volume / dx;
      // Interior face toward the +d neighbor (each pair visited once).
      if (idx[a] + 1 < cfg.grid.shape[a]) {
        auto nidx = idx;
        nidx[a] += 1;
        const Index nb = cfg.grid.flatten(nidx);
        const double k_harm =
            2.0 * conductivity[flat] * conductivity[nb] / (conductivity[flat] + conductivity[nb]);
        const double g = face_area * k_harm / dx;
        diag[flat] += g;
        diag[nb] += g;
        trip.emplace_back(flat, nb, -g);
        trip.emplace_back(nb, flat, -g);
      }
      // Robin boundary on outer faces (temperatures are ambient-relative, so
      // the ghost flux is h * T).
      if (idx[a] == 0) diag[flat] += cfg.boundary_h * face_area;
      if (idx[a] + 1 == cfg.grid.shape[a]) diag[flat] += cfg.boundary_h * face_area;
    }
  }
  for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, diag[i]);
  Eigen::SparseMatrix<double> stiffness(n, n);
  stiffness.setFromTriplets(trip.begin(), trip.end());

  const Vector m_diag = rho_c * cell_volume;
  Eigen::SparseMatrix<double> step = stiffness * cfg.dt;
  for (Index i = 0; i < n; ++i) step.coeffRef(i, i) += m_diag[i];

  SystemModel model;
  model.A = std::make_shared<ImplicitStepOp>(m_diag, step);
  model.grid = cfg.grid;
  model.masks = cfg.masks;
  model.dt = cfg.dt;

  // B columns: (M + dt K)^-1 dt * (cell volume * b_i), heat in watts per unit
  // input.
  model.B.resize(n, static_cast<Index>(cfg.loads.size()));
  for (size_t u = 0; u < cfg.loads.size(); ++u) {
    if (cfg.loads[u].size() != n) throw ShapeError("model.loads: load field on wrong grid");
    const Vector forcing = cfg.dt * cell_volume * cfg.loads[u].values;
    // Reuse the cached factorization through the operator's adjoint identity:
    // (M + dt K)^-1 f = A (M^-1 f).
    model.B.col(static_cast<Index>(u)) =
        model.A->apply((forcing.array() / m_diag.array()).matrix());
  }

  for (Index i = 0; i < n; ++i)
    if (measurement_mask.values[i] != 0.0) model.measured_indices.push_back(i);
  if (model.measured_indices.empty())
    throw ShapeError("model.measurement_mask: no measurable cells");
  model.C = make_selection(n, model.measured_indices);

  model.r_diag = Vector::Constant(static_cast<Index>(model.measured_indices.size()),
                                  noise.r_default);
  for (const auto& [idx, var] : noise.r_overrides) {
    if (idx < 0 || idx >= model.r_diag.size())
      throw ShapeError("noise.r_overrides: output index out of range");
    if (!(var > 0.0)) throw ShapeError("noise.r_overrides: variance must be positive");
    model.r_diag[idx] = var;
  }
  if (!(model.r_diag.array() > 0.0).all())
    throw ShapeError("noise.r_default: variance must be positive");

  if (noise.process_scale > 0.0) {
    model.L_Q = op_scale(make_masked_kernel(cfg.masks, noise.process_kernel, cfg.grid),
                         noise.process_scale);
  } else {
    model.L_Q = op_scale(make_identity(n), 0.0);
  }

  // Implicit Euler is unconditionally stable; verify on small systems where
  // the power iteration is affordable.
  if (n <= 512) {
    const double radius = spectral_radius_estimate(*model.A, 200, 0x5eedULL);
    if (radius > 1.0 + 1e-8)
      throw NumericError("model: step operator spectral radius " + std::to_string(radius) +
                         " exceeds 1");
  }
  return model;
}

Trajectory simulate_truth(const SystemModel& model, const std::vector<Vector>& inputs,
                          int steps, std::uint64_t seed, const Vector& x0) {
  if (static_cast<int>(inputs.size()) < steps)
    throw ShapeError("simulate: need at least `steps` inputs, got " +
                     std::to_string(inputs.size()));
  const Index n = model.n_x();
  Trajectory traj;
  traj.seed = seed;
  traj.states.reserve(static_cast<size_t>(steps) + 1);
  traj.states.push_back(x0.size() == 0 ? Vector::Zero(n) : x0);
  if (traj.states.front().size() != n) throw ShapeError("simulate: x0 has wrong length");

  SplitMix64 process(substream_seed(seed, 1));
  SplitMix64 measurement(substream_seed(seed, 2));
  const Vector r_std = model.r_diag.cwiseSqrt();

  for (int k = 0; k < steps; ++k) {
    const Vector& u = inputs[static_cast<size_t>(k)];
    if (u.size() != model.n_u()) throw ShapeError("simulate: input has wrong length");
    Vector x = model.A->apply(traj.states.back());
    if (model.n_u() > 0) x += model.B * u;
    x += model.L_Q->apply(process.normal_vector(model.L_Q->cols()));
    Vector y = model.C->apply(x);
    y += (r_std.array() * measurement.normal_vector(y.size()).array()).matrix();
    traj.inputs.push_back(u);
    traj.states.push_back(std::move(x));
    traj.outputs.push_back(std::move(y));
  }
  return traj;
}

Eigen::Vector2d input_sequence(int k) {
  Eigen::Vector2d u;
  u[0] = (k >= 2 && k <= 7) ? 1.0 : 0.0;
  u[1] = (k >= 8 && k <= 15) ? 1.0 : 0.0;
  return u;
}

Matrix pod_reduce(const Matrix& snapshots, double energy_fraction) {
  if (snapshots.cols() < 2) throw ShapeError("pod: need at least 2 snapshots");
  if (!(energy_fraction > 0.0 && energy_fraction <= 1.0))
    throw ShapeError("pod: energy fraction must be in (0, 1]");
  Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
  const Vector& sigma = svd.singularValues();
  const double total = sigma.squaredNorm();
  if (total == 0.0) throw ShapeError("pod: all snapshots are zero");
  // Numerically zero singular values carry no energy; cutting them keeps
  // rank-deficient snapshot sets from padding the basis with noise modes.
  // A fraction of exactly 1 keeps the full numerical rank rather than
  // trusting the energy accumulator, which saturates in floating point
  // once the remaining modes fall below its roundoff.
  const double floor = sigma[0] * 1e-12;
  Index rank = 0;
  double acc = 0.0;
  for (Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] <= floor) break;
    acc += sigma[i] * sigma[i];
    rank = i + 1;
    if (energy_fraction < 1.0 && acc >= energy_fraction * total) break;
  }
  return svd.matrixU().leftCols(rank);
}

RomMatrices project_rom(const SystemModel& model, const Matrix& V) {
  const Index n_r = V.cols();
  if (V.rows() != model.n_x()) throw ShapeError("rom: V rows != n_x");
  RomMatrices rom;
  Matrix AV(model.n_x(), n_r);
  Matrix LtV(model.L_Q->cols(), n_r);
  Matrix CV(model.n_y(), n_r);
  for (Index j = 0; j < n_r; ++j) {
    const Vector col = V.col(j);
    AV.col(j) = model.A->apply(col);
    LtV.col(j) = model.L_Q->apply_adjoint(col);
    CV.col(j) = model.C->apply(col);
  }
  rom.A_r = V.transpose() * AV;
  rom.B_r = V.transpose() * model.B;
  rom.C_r = CV;
  // Q_r = V^T L L^T V, assembled from columns of L^T V.
  rom.Q_r = LtV.transpose() * LtV;
  return rom;
}

Matrix pod_snapshots(const SystemModel& model, int steps_per_input) {
  const Index n_u = model.n_u();
  if (n_u == 0) throw ShapeError("pod snapshots: model has no inputs");
  Matrix snaps(model.n_x(), 2 * n_u * static_cast<Index>(steps_per_input));
  Index col = 0;
  for (Index u = 0; u < n_u; ++u) {
    // Impulse response: one active step, then free decay.
    Vector x = model.B.col(u);
    for (int k = 0; k < steps_per_input; ++k) {
      snaps.col(col++) = x;
      x = model.A->apply(x);
    }
    // Held-step response.
    x = Vector::Zero(model.n_x());
    for (int k = 0; k < steps_per_input; ++k) {
      x = model.A->apply(x) + model.B.col(u);
      snaps.col(col++) = x;
    }
  }
  return snaps;
}

void export_trajectory(const Trajectory& traj, const Grid& grid, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.csv");
  if (!manifest) throw std::runtime_error("trajectory export: cannot write manifest in " + dir);
  manifest << "k,state_file\n";
  for (size_t k = 0; k < traj.states.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "state_%04zu.sf1", k);
    write_sf1({grid, traj.states[k]}, dir + "/" + name);
    manifest << k << ',' << name << '\n';
  }
}

}  // namespace lskkf
