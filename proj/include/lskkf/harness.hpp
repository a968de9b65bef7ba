#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lskkf/model.hpp"
#include "lskkf/solver.hpp"

namespace lskkf {

/// One observer to run in an experiment, with its tuning knobs. Only the
/// fields for the chosen kind are consulted.
struct ObserverSpec {
  std::string kind;  // "lsk-kf", "enkf", "rom-kf", "luenberger"

  // lsk-kf: masked-kernel covariance factor and its CG solve
  GaussianKernel kernel{0.0348, 0.008};
  CgOptions cg{1e-8, 500};

  // enkf
  int ensemble_size = 20;
  bool literal_innovation = false;

  // rom-kf
  double pod_energy = 0.999;
  int pod_steps_per_input = 25;

  // luenberger
  int design_draws = 500;
};

/// Fully resolved experiment description: the harness runs this as-is.
struct ExperimentSetup {
  MaterialConfig material;
  NoiseConfig noise;
  ScalarField measurement_mask;
  std::vector<Index> probes;
  std::vector<ObserverSpec> observers;
  int steps = 17;
  std::uint64_t seed = 0;
  int snapshot_step = -1;  // full-state estimate capture; -1 disables
  std::string config_digest;
};

struct RmsResult {
  std::vector<double> per_probe;
  double total = 0.0;  // RMS over the concatenation of all probe residuals
};

struct ObserverResult {
  std::string name;
  std::vector<double> probe_rms;
  double total_rms = 0.0;
  std::vector<double> step_seconds;
  double mean_step_seconds = 0.0;
  double std_estimate = 0.0;
  std::vector<int> cg_iterations;            // lsk-kf only
  std::vector<Vector> probe_values;          // per step, estimate at probes
  Vector snapshot;                           // estimate at snapshot_step, may be empty
  bool failed = false;
  std::string failure;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::string config_digest;
  int steps = 0;
  std::string std_pair;  // which estimate pair fed the deviation estimator
  std::vector<Index> probes;
  std::vector<Vector> truth_probe_values;  // per step, truth at probes
  Vector truth_snapshot;
  std::vector<ObserverResult> results;
};

/// Simulates the truth, runs every requested observer over the same
/// measurement record, and collects probe RMS, deviation estimates, and
/// per-step wall-clock. An observer failing mid-run is annotated and the
/// remaining observers still run.
ExperimentReport run_experiment(const ExperimentSetup& setup);

/// Per-probe and total RMS of (estimate - truth) sampled at probe indices.
RmsResult rms_at_probes(const std::vector<Vector>& estimates, const std::vector<Vector>& truth,
                        const std::vector<Index>& probes);

/// Same, from already-extracted per-step probe values.
RmsResult rms_from_probe_series(const std::vector<Vector>& estimate_probes,
                                const std::vector<Vector>& truth_probes);

/// Deviation of the estimation error from two consecutive estimates of a
/// quasi-static field: (sqrt(2)/2) * sample standard deviation of their
/// difference.
double std_estimate(const Vector& first, const Vector& second);

/// Writes report.json (deterministic given the seed, wall-clock fields
/// aside) and steps.csv next to it.
void write_report(const ExperimentReport& report, const std::string& dir);

struct BenchRow {
  std::string observer;
  Index n_x = 0;
  int ensemble_size = 0;  // enkf rows only
  double median_step_seconds = 0.0;
  int steps_timed = 0;
  bool skipped = false;
  std::string note;
};

struct BenchTable {
  std::vector<BenchRow> rows;
  // log-log slope of median step time vs n_x per observer, keyed by name;
  // only observers with at least two completed rows appear.
  std::vector<std::pair<std::string, double>> slopes;
};

/// Times each observer's per-step cost on square default-phantom grids of
/// the given side lengths: median over `steps` timed steps after one
/// warm-up. Allocation failure at a size marks the row skipped.
BenchTable scaling_benchmark(const std::vector<Index>& sides,
                             const std::vector<ObserverSpec>& observers, int steps = 5,
                             std::uint64_t seed = 0);

void write_bench_csv(const BenchTable& table, const std::string& path);

/// Parameterized two-material phantom: a circular inclusion in a homogeneous
/// square slab with Gaussian heat spots. Geometry fractions are relative to
/// the slab extent.
struct PhantomSpec {
  Index side = 128;
  double spacing = 0.002;  // m
  double dt = 93.0;        // s
  double boundary_h = 10.0;
  std::array<double, 2> lesion_center{0.5, 0.6};
  double lesion_radius = 0.15;
  std::vector<Material> materials = {{1000.0, 4000.0, 0.55}, {1200.0, 1700.0, 0.30}};
  struct Load {
    std::array<double, 2> center;
    double sigma;  // fraction of extent
    double peak;   // W/m^3
  };
  std::vector<Load> loads = {{{0.5, 0.6}, 0.04, 5.0e4}, {{0.3, 0.3}, 0.04, 5.0e4}};
};

/// Builds the phantom model, full-state measurement, six probes in the
/// background material stratified by distance to the lesion center, and the
/// default observer set.
ExperimentSetup build_phantom(const PhantomSpec& spec);

/// build_phantom at the given square size with everything else default; the
/// basis of the default profile and the benchmark scenarios.
ExperimentSetup default_setup(Index side);

}  // namespace lskkf
