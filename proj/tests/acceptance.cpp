// Acceptance gate: end-to-end checks of the toolkit's core guarantees, run
// as one standalone binary. Each criterion prints a PASS/FAIL line with the
// measured value, its tolerance, and the runtime; the exit code is the
// number of failed criteria.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "lskkf/config.hpp"
#include "lskkf/harness.hpp"
#include "lskkf/observers.hpp"
#include "lskkf/oracle.hpp"
#include "lskkf/rng.hpp"

using namespace lskkf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

Matrix random_matrix(Index rows, Index cols, SplitMix64& rng) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.next_normal();
  return m;
}

Matrix random_stable(Index n, double gain, SplitMix64& rng) {
  Matrix a = random_matrix(n, n, rng);
  return a * (gain / a.operatorNorm());
}

Matrix random_spd(Index n, double scale, SplitMix64& rng) {
  const Matrix g = random_matrix(n, n, rng) * scale;
  return g * g.transpose() + 1e-8 * Matrix::Identity(n, n);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- criterion 1: dense Kalman and least-squares updates coincide ---------

Outcome check_kf_lsq_equivalence() {
  SplitMix64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.next_u64() % 49);
    const Index m = 1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n));
    const Matrix a = random_stable(n, 0.95, rng);
    const Matrix b = random_matrix(n, 1, rng);
    const Matrix c = random_matrix(m, n, rng);
    const Matrix q = random_spd(n, 0.3, rng);
    const Matrix r = random_spd(m, 0.3, rng) + 0.05 * Matrix::Identity(m, m);

    Vector x_kf = Vector::Zero(n);
    Vector x_lsq = Vector::Zero(n);
    Matrix p = random_spd(n, 0.5, rng);
    for (int k = 0; k < 10; ++k) {
      const Vector u = rng.normal_vector(1);
      const Vector y = rng.normal_vector(m);
      Matrix p_prior = a * p * a.transpose() + q;
      p_prior = 0.5 * (p_prior + p_prior.transpose());
      x_lsq = lsq_kf_step_dense(x_lsq, p_prior, a, b, c, r, u, y);
      const KfState next = kf_step_dense(x_kf, p, a, b, c, q, r, u, y);
      x_kf = next.x;
      p = next.P;
      worst = std::max(worst, (x_kf - x_lsq).norm() / (1.0 + x_kf.norm()));
    }
  }
  return {worst <= 1e-9,
          fmt("max relative state difference %.3g over 100 systems x 10 steps (tol 1e-9)",
              worst)};
}

// ---- criterion 2: matrix-free filter vs dense steady-state filter ---------

Outcome check_rod_steady_filter() {
  const Index n = 100;
  const Grid grid = make_grid({n}, {0.002});
  Vector left = Vector::Zero(n), right = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) (i < 60 ? left : right)[i] = 1.0;
  MaterialConfig cfg;
  cfg.grid = grid;
  cfg.masks = MaskSet({{grid, left}, {grid, right}});
  cfg.materials = {{1050.0, 3600.0, 0.52}, {1000.0, 4180.0, 0.60}};
  cfg.boundary_h = 10.0;
  cfg.dt = 93.0;
  cfg.loads = {constant_field(grid, 200.0)};
  NoiseConfig noise;
  noise.process_scale = 0.05;
  noise.process_kernel = {1.0, 0.006};
  noise.r_default = 0.05;
  const SystemModel model = assemble_system(cfg, constant_field(grid, 1.0), noise);

  const Matrix ad = to_dense(*model.A);
  const Matrix cd = to_dense(*model.C);
  const Matrix lq = to_dense(*model.L_Q);
  const auto steady =
      riccati_steady_state(ad, cd, lq * lq.transpose(), Matrix(model.r_diag.asDiagonal()));

  CgOptions cg;
  cg.tol = 1e-10;
  cg.max_iter = 2000;
  LskkfObserver observer(model, from_dense(factor_spd(steady.P_inf)), cg);

  const int steps = 20;
  const std::vector<Vector> inputs(steps, Vector::Ones(1));
  const Trajectory truth = simulate_truth(model, inputs, steps, 2);

  Vector x_ref = Vector::Zero(n);
  double worst = 0.0;
  for (int k = 0; k < steps; ++k) {
    const Vector& y = truth.outputs[static_cast<size_t>(k)];
    observer.step(inputs[static_cast<size_t>(k)], y);
    const Vector x_prior = ad * x_ref + model.B * inputs[static_cast<size_t>(k)];
    x_ref = x_prior + steady.K_inf * (y - cd * x_prior);
    worst = std::max(worst,
                     (observer.current_estimate() - x_ref).norm() / (1.0 + x_ref.norm()));
  }
  return {worst <= 1e-6,
          fmt("max relative difference %.3g on a 100-cell rod over %d steps (tol 1e-6)",
              worst, steps)};
}

// ---- criterion 3: operators vs dense oracles, adjoint contract ------------

Matrix dense_convolution(const Grid& grid, const ScalarField& kernel) {
  const auto& kshape = kernel.grid.shape;
  const std::array<Index, 3> half{kshape[0] / 2, kshape[1] / 2, kshape[2] / 2};
  Matrix m = Matrix::Zero(grid.size(), grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const auto a = grid.unflatten(i);
    for (Index j = 0; j < grid.size(); ++j) {
      const auto b = grid.unflatten(j);
      bool inside = true;
      std::array<Index, 3> off{};
      for (size_t d = 0; d < 3; ++d) {
        off[d] = a[d] - b[d];
        if (off[d] < -half[d] || off[d] > half[d]) inside = false;
      }
      if (!inside) continue;
      const Index src =
          ((off[0] + half[0]) * kshape[1] + (off[1] + half[1])) * kshape[2] +
          (off[2] + half[2]);
      m(i, j) = kernel.values[src];
    }
  }
  return m;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

ScalarField random_kernel(const Grid& grid, Index support, SplitMix64& rng) {
  std::vector<Index> shape;
  std::vector<double> spacing;
  for (int d = 0; d < grid.dims; ++d) {
    shape.push_back(support);
    spacing.push_back(grid.spacing[static_cast<size_t>(d)]);
  }
  const Grid kg = make_grid(shape, spacing);
  return {kg, rng.normal_vector(kg.size())};
}

MaskSet half_split(const Grid& grid) {
  Vector left = Vector::Zero(grid.size());
  Vector right = Vector::Zero(grid.size());
  for (Index i = 0; i < grid.size(); ++i)
    (grid.unflatten(i)[1] < grid.shape[1] / 2 ? left : right)[i] = 1.0;
  return MaskSet({{grid, left}, {grid, right}});
}

LinOp random_leaf(const Grid& grid, SplitMix64& rng) {
  const Index n = grid.size();
  switch (rng.next_u64() % 5) {
    case 0:
      return make_identity(n);
    case 1:
      return make_diagonal(rng.normal_vector(n));
    case 2: {
      std::vector<Eigen::Triplet<double>> trips;
      for (Index k = 0; k < 3 * n; ++k)
        trips.emplace_back(static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n)),
                           static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n)),
                           rng.next_normal());
      return make_sparse(n, n, trips);
    }
    case 3:
      return make_convolution(grid, random_kernel(grid, 3, rng));
    default:
      return make_masked_kernel(half_split(grid),
                                GaussianKernel{0.5 + rng.next_unit(), 1.0 + rng.next_unit()},
                                grid);
  }
}

LinOp random_composition(const Grid& grid, int depth, SplitMix64& rng) {
  if (depth == 0) return random_leaf(grid, rng);
  switch (rng.next_u64() % 4) {
    case 0:
      return op_sum(random_composition(grid, depth - 1, rng),
                    random_composition(grid, depth - 1, rng));
    case 1:
      return op_compose(random_composition(grid, depth - 1, rng),
                        random_composition(grid, depth - 1, rng));
    case 2:
      return op_scale(random_composition(grid, depth - 1, rng), rng.next_normal());
    default:
      return op_adjoint(random_composition(grid, depth - 1, rng));
  }
}

double probe_against_dense(const LinearOperator& op, const Matrix& dense, SplitMix64& rng,
                           int probes = 10) {
  double worst = 0.0;
  for (int t = 0; t < probes; ++t) {
    const Vector v = rng.normal_vector(op.cols());
    const Vector w = rng.normal_vector(op.rows());
    worst = std::max(worst, (op.apply(v) - dense * v).norm() / std::max(1.0, v.norm()));
    worst = std::max(worst, (op.apply_adjoint(w) - dense.transpose() * w).norm() /
                                std::max(1.0, w.norm()));
  }
  return worst;
}

Outcome check_operator_oracles() {
  SplitMix64 rng(103);
  double worst = 0.0;

  // Convolutions against the Toeplitz definition, up to a 64x64 grid.
  for (const auto& shape : std::vector<std::vector<Index>>{{16}, {9, 12}, {64, 64}})
    for (Index support : {3, 5}) {
      std::vector<double> spacing(shape.size(), 0.5);
      const Grid grid = make_grid(shape, spacing);
      const ScalarField kernel = random_kernel(grid, support, rng);
      const LinOp op = make_convolution(grid, kernel);
      worst = std::max(worst, probe_against_dense(*op, dense_convolution(grid, kernel), rng));
    }

  // Separable operator against an explicit Kronecker product.
  {
    const Grid grid = make_grid({3, 4, 2}, {1.0, 1.0, 1.0});
    SplitMix64 krng(104);
    const Matrix f1 = random_matrix(5, 3, krng);
    const Matrix f2 = random_matrix(2, 4, krng);
    const Matrix f3 = random_matrix(3, 2, krng);
    const LinOp op = make_separable(grid, {f1, f2, f3});
    worst = std::max(worst, probe_against_dense(*op, kron(kron(f1, f2), f3), rng));
  }

  // Diagonal.
  {
    const Vector d = rng.normal_vector(40);
    worst = std::max(worst, probe_against_dense(*make_diagonal(d), Matrix(d.asDiagonal()),
                                                rng));
  }

  // Masked kernel against sum of mask-sandwiched dense convolutions.
  {
    const Grid grid = make_grid({32, 32}, {0.002, 0.002});
    const MaskSet masks = half_split(grid);
    const GaussianKernel kernel{0.8, 0.007};
    const Matrix kd = dense_convolution(grid, gaussian_kernel_field(grid, kernel));
    Matrix dense = Matrix::Zero(grid.size(), grid.size());
    for (Index m = 0; m < masks.count(); ++m) {
      const Vector& phi = masks.mask(m).values;
      dense += phi.asDiagonal() * kd * phi.asDiagonal();
    }
    worst = std::max(
        worst, probe_against_dense(*make_masked_kernel(masks, kernel, grid), dense, rng));
  }

  // Adjoint contract over random operator compositions.
  const Grid grid = make_grid({6, 5}, {1.0, 1.0});
  double worst_adjoint = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const LinOp op = random_composition(grid, 1 + static_cast<int>(rng.next_u64() % 3), rng);
    const Vector u = rng.normal_vector(op->cols());
    const Vector v = rng.normal_vector(op->rows());
    const double gap = std::abs(op->apply(u).dot(v) - u.dot(op->apply_adjoint(v))) /
                       (u.norm() * v.norm());
    worst_adjoint = std::max(worst_adjoint, gap);
  }

  const bool pass = worst <= 1e-10 && worst_adjoint <= 1e-10;
  return {pass, fmt("max dense-oracle gap %.3g, max adjoint gap %.3g over 1000 "
                    "compositions (tol 1e-10)",
                    worst, worst_adjoint)};
}

// ---- criterion 4: masked kernels never couple materials -------------------

Outcome check_material_decoupling() {
  const ExperimentSetup setup = default_setup(32);
  const MaskSet& masks = setup.material.masks;
  const Grid& grid = setup.material.grid;
  const LinOp op = make_masked_kernel(masks, GaussianKernel{0.0348, 0.008}, grid);

  const std::vector<Index> probes = probe_indices(masks, 8);
  long checked = 0;
  long violations = 0;
  for (Index j : probes) {
    Vector e = Vector::Zero(grid.size());
    e[j] = 1.0;
    const Vector col = op->apply(e);
    const Vector row = op->apply_adjoint(e);
    const int mat = masks.material_of(j);
    for (Index i = 0; i < grid.size(); ++i) {
      if (masks.material_of(i) == mat) continue;
      ++checked;
      if (col[i] != 0.0 || row[i] != 0.0) ++violations;
    }
  }
  return {violations == 0,
          fmt("%ld cross-material entries checked across %zu probe columns, %ld nonzero "
              "(tol: exactly zero)",
              checked, probes.size(), violations)};
}

// ---- criterion 5: scalar steady covariance closed form --------------------

Outcome check_scalar_riccati() {
  const auto sol =
      riccati_steady_state(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1.0),
                           Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0));
  const double expected = (0.25 + std::sqrt(4.0625)) / 2.0;
  const double err = std::abs(sol.P_inf(0, 0) - expected);
  return {err <= 1e-8, fmt("|P - %.6f| = %.3g after %d iterations (tol 1e-8)", expected, err,
                           sol.iterations)};
}

// ---- criterion 6: deviation estimator on a known error level --------------

Outcome check_std_estimator() {
  SplitMix64 rng(106);
  const Index n = 100000;
  const Vector field = rng.normal_vector(n);
  const Vector first = field + 0.2 * rng.normal_vector(n);
  const Vector second = field + 0.2 * rng.normal_vector(n);
  const double est = std_estimate(first, second);
  const double rel = std::abs(est - 0.2) / 0.2;
  return {rel <= 0.05,
          fmt("estimated %.5f K for a true 0.2 K error level, off by %.2f%% (tol 5%%)", est,
              100.0 * rel)};
}

// ---- criterion 7: case-study accuracy and deviation orderings -------------

Outcome check_case_study() {
  const ExperimentConfig cfg = config_from_profile("default");
  std::map<std::string, std::vector<double>> rms, devs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    ExperimentSetup setup = cfg.setup;
    setup.seed = seed;
    const ExperimentReport report = run_experiment(setup);
    for (const auto& res : report.results) {
      if (res.failed)
        return {false, "observer " + res.name + " failed at seed " +
                           std::to_string(seed) + ": " + res.failure};
      rms[res.name].push_back(res.total_rms);
      devs[res.name].push_back(res.std_estimate);
    }
  }
  for (const char* name : {"lsk-kf", "enkf-n20", "luenberger"})
    if (rms.find(name) == rms.end())
      return {false, std::string("missing observer ") + name};

  const double lsk_rms = median(rms["lsk-kf"]);
  const double enkf_rms = median(rms["enkf-n20"]);
  const double lsk_dev = median(devs["lsk-kf"]);
  const double lue_dev = median(devs["luenberger"]);
  const bool pass = lsk_rms <= enkf_rms && lsk_dev <= lue_dev;
  return {pass,
          fmt("10-seed medians: probe RMS %.4f K (enkf-n20 %.4f K), deviation %.4f K "
              "(luenberger %.4f K); require both orderings",
              lsk_rms, enkf_rms, lsk_dev, lue_dev)};
}

// ---- criterion 8: per-step cost scaling ------------------------------------

Outcome check_scaling() {
  ObserverSpec lsk;
  lsk.kind = "lsk-kf";
  const BenchTable lsk_table = scaling_benchmark({64, 128, 256, 512}, {lsk}, 3, 0);
  for (const auto& row : lsk_table.rows)
    if (row.skipped) return {false, "lsk-kf timing skipped at n_x=" + std::to_string(row.n_x)};
  double slope = 0.0;
  bool have_slope = false;
  for (const auto& [label, s] : lsk_table.slopes)
    if (label == "lsk-kf") {
      slope = s;
      have_slope = true;
    }
  if (!have_slope) return {false, "no lsk-kf scaling slope measured"};

  ObserverSpec e5, e10, e20;
  e5.kind = e10.kind = e20.kind = "enkf";
  e5.ensemble_size = 5;
  e10.ensemble_size = 10;
  e20.ensemble_size = 20;
  const BenchTable enkf_table = scaling_benchmark({64}, {e5, e10, e20}, 9, 0);
  std::vector<double> per_member;
  for (const auto& row : enkf_table.rows) {
    if (row.skipped) return {false, "enkf timing skipped at N=" + std::to_string(row.ensemble_size)};
    per_member.push_back(row.median_step_seconds / row.ensemble_size);
  }
  const double mean =
      std::accumulate(per_member.begin(), per_member.end(), 0.0) / per_member.size();
  double spread = 0.0;
  for (double t : per_member) spread = std::max(spread, std::abs(t - mean) / mean);

  const bool pass = slope <= 1.35 && spread <= 0.2;
  return {pass, fmt("lsk-kf log-log slope %.3f for n_x up to 262144 (tol 1.35); enkf "
                    "per-member step spread %.1f%% across N in {5,10,20} (tol 20%%)",
                    slope, 100.0 * spread)};
}

// ---- criterion 9: reduced filter sanity ------------------------------------

Outcome check_reduced_filter() {
  // Identity basis: the reduced filter must be the dense Kalman filter.
  SplitMix64 rng(109);
  const Index n = 15;
  const Matrix a = random_stable(n, 0.9, rng);
  const Matrix b = random_matrix(n, 2, rng);
  std::vector<Index> measured;
  for (Index i = 0; i < n; i += 3) measured.push_back(i);
  const Index n_y = static_cast<Index>(measured.size());
  const Matrix g = random_matrix(n, n, rng) * 0.1 + Matrix::Identity(n, n);
  const Vector r_diag = Vector::Constant(n_y, 0.3);

  SystemModel model;
  model.A = from_dense(a);
  model.B = b;
  model.C = make_selection(n, measured);
  model.L_Q = from_dense(g);
  model.r_diag = r_diag;
  model.grid = make_grid({n}, {0.002});
  model.dt = 93.0;
  model.measured_indices = measured;

  const Matrix eye = Matrix::Identity(n, n);
  RomkfObserver obs(model, eye, project_rom(model, eye));

  Matrix c = Matrix::Zero(n_y, n);
  for (Index i = 0; i < n_y; ++i) c(i, measured[static_cast<size_t>(i)]) = 1.0;
  const Matrix q = g * g.transpose();
  Vector x_ref = Vector::Zero(n);
  Matrix p_ref = Matrix::Zero(n, n);
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const Vector u = rng.normal_vector(2);
    const Vector y = rng.normal_vector(n_y);
    obs.step(u, y);
    Vector x_prior = a * x_ref + b * u;
    const Matrix p_prior = a * p_ref * a.transpose() + q;
    const Matrix s = c * p_prior * c.transpose() + Matrix(r_diag.asDiagonal());
    const Matrix gain = p_prior * c.transpose() * s.inverse();
    x_ref = x_prior + gain * (y - c * x_prior);
    p_ref = (Matrix::Identity(n, n) - gain * c) * p_prior;
    worst = std::max(worst,
                     (obs.current_estimate() - x_ref).norm() / (1.0 + x_ref.norm()));
  }

  // POD compresses the two-input heat response into a small basis.
  const ExperimentSetup setup = default_setup(32);
  const SystemModel heat =
      assemble_system(setup.material, setup.measurement_mask, setup.noise);
  const Matrix snaps = pod_snapshots(heat, 25);
  const Index n_r = pod_reduce(snaps, 0.999).cols();

  const bool pass = worst <= 1e-10 && n_r >= 1 && n_r <= 15;
  return {pass, fmt("identity-basis gap to dense KF %.3g (tol 1e-10); POD keeps %lld of "
                    "%lld snapshot directions at 0.999 energy (limit 15)",
                    worst, static_cast<long long>(n_r),
                    static_cast<long long>(snaps.cols()))};
}

// ---- criterion 10: CLI runs are bit-reproducible ---------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(),
                                                suffix.size(), suffix) == 0;
}

// report.json with wall-clock subtrees removed.
nlohmann::json normalized_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  for (auto& o : j["observers"]) o.erase("timing");
  return j;
}

// steps.csv rows with the *_seconds columns dropped.
std::vector<std::vector<std::string>> normalized_steps(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path);
  std::string header;
  std::getline(in, header);
  const auto cols = split_csv(header);
  std::vector<size_t> keep;
  for (size_t c = 0; c < cols.size(); ++c)
    if (!ends_with(cols[c], "_seconds")) keep.push_back(c);
  std::vector<std::vector<std::string>> rows;
  rows.push_back({});
  for (size_t c : keep) rows.back().push_back(cols[c]);
  for (std::string line; std::getline(in, line);) {
    const auto cells = split_csv(line);
    rows.push_back({});
    for (size_t c : keep) rows.back().push_back(cells.at(c));
  }
  return rows;
}

Outcome check_cli_determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "lskkf_acceptance_cli";
  const fs::path dir_a = base / "a", dir_b = base / "b";
  fs::remove_all(base);
  fs::create_directories(dir_a);
  fs::create_directories(dir_b);

  const std::string cli = LSKKF_CLI_PATH;
  for (const fs::path& dir : {dir_a, dir_b}) {
    const std::string cmd = "\"" + cli + "\" run --profile small --seed 7 --out \"" +
                            dir.string() + "\" > \"" + (dir / "stdout.txt").string() +
                            "\" 2>&1";
    const int ret = std::system(cmd.c_str());
    if (ret != 0) return {false, fmt("CLI run into %s exited with %d", dir.c_str(), ret)};
  }

  try {
    const auto report_a = normalized_report((dir_a / "report.json").string());
    const auto report_b = normalized_report((dir_b / "report.json").string());
    if (report_a != report_b)
      return {false, "report.json differs between identical seeded runs"};

    const auto steps_a = normalized_steps((dir_a / "steps.csv").string());
    const auto steps_b = normalized_steps((dir_b / "steps.csv").string());
    if (steps_a != steps_b)
      return {false, "steps.csv differs between identical seeded runs"};

    const size_t cells = steps_a.empty() ? 0 : steps_a.size() * steps_a.front().size();
    fs::remove_all(base);
    return {true, fmt("two seeded runs agree: report.json identical after dropping timing, "
                      "%zu steps.csv cells identical after dropping *_seconds",
                      cells)};
  } catch (const std::exception& e) {
    return {false, std::string("output comparison failed: ") + e.what()};
  }
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_seconds;  // 0 = no stated budget
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"dense filter and least-squares equivalence", 10, check_kf_lsq_equivalence},
      {"matrix-free filter matches the dense steady-state filter", 5,
       check_rod_steady_filter},
      {"operators match dense oracles and the adjoint contract", 30, check_operator_oracles},
      {"masked kernels never couple materials", 0, check_material_decoupling},
      {"scalar steady covariance closed form", 1, check_scalar_riccati},
      {"deviation estimator recovers a known error level", 2, check_std_estimator},
      {"case-study accuracy and deviation orderings", 300, check_case_study},
      {"per-step cost scaling", 600, check_scaling},
      {"reduced filter is exact at identity basis and POD stays compact", 30,
       check_reduced_filter},
      {"command-line runs are bit-reproducible", 0, check_cli_determinism},
  };

  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[i].run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criteria[i].budget_seconds > 0 && elapsed > criteria[i].budget_seconds) {
      outcome.pass = false;
      outcome.detail += fmt(" [exceeded %.0f s budget]", criteria[i].budget_seconds);
    }
    if (!outcome.pass) ++failures;
    std::printf("[%2zu] %s  %s: %s  (t=%.2f s)\n", i + 1, outcome.pass ? "PASS" : "FAIL",
                criteria[i].name, outcome.detail.c_str(), elapsed);
    std::fflush(stdout);
  }
  std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
