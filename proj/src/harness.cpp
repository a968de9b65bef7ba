#include "lskkf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <numeric>

#include <nlohmann/json.hpp>

#include "lskkf/observers.hpp"
#include "lskkf/rng.hpp"

namespace lskkf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Vector> schedule_inputs(int steps) {
  std::vector<Vector> inputs;
  inputs.reserve(static_cast<size_t>(steps));
  // inputs[i] drives the transition into state i+1.
  for (int i = 0; i < steps; ++i) inputs.push_back(input_sequence(i + 1));
  return inputs;
}

Vector at_probes(const Vector& state, const std::vector<Index>& probes) {
  Vector out(static_cast<Index>(probes.size()));
  for (size_t p = 0; p < probes.size(); ++p) out[static_cast<Index>(p)] = state[probes[p]];
  return out;
}

// The observers share one uncertainty model, sized for design_scale rather
// than for the simulated disturbance level: the EnKF forecasts with it, the
// ROM-KF projects it, and the Luenberger gain is drawn from it.
SystemModel design_view(const SystemModel& model, const NoiseConfig& noise) {
  const double scale = noise.design_scale < 0.0 ? noise.process_scale : noise.design_scale;
  SystemModel design = model;
  if (scale > 0.0) {
    design.L_Q = op_scale(make_masked_kernel(model.masks, noise.process_kernel, model.grid),
                          scale);
  } else {
    design.L_Q = op_scale(make_identity(model.n_x()), 0.0);
  }
  return design;
}

std::unique_ptr<Observer> build_observer(const ObserverSpec& spec, const SystemModel& model,
                                         std::uint64_t seed, size_t index) {
  if (spec.kind == "lsk-kf") {
    LinOp L = make_masked_kernel(model.masks, spec.kernel, model.grid);
    return std::make_unique<LskkfObserver>(model, L, spec.cg);
  }
  if (spec.kind == "enkf") {
    return std::make_unique<EnkfObserver>(model, spec.ensemble_size,
                                          substream_seed(seed, 100 + index),
                                          spec.literal_innovation);
  }
  if (spec.kind == "rom-kf") {
    const Matrix snapshots = pod_snapshots(model, spec.pod_steps_per_input);
    Matrix V = pod_reduce(snapshots, spec.pod_energy);
    RomMatrices rom = project_rom(model, V);
    return std::make_unique<RomkfObserver>(model, std::move(V), std::move(rom));
  }
  if (spec.kind == "luenberger") {
    const LuenbergerDesign design =
        design_luenberger_gain(model, spec.design_draws, substream_seed(seed, 200 + index));
    return std::make_unique<LuenbergerObserver>(model, design.gain_diag);
  }
  throw ShapeError("observer kind '" + spec.kind + "' is not one of lsk-kf, enkf, rom-kf, "
                   "luenberger");
}

std::string result_name(const ObserverSpec& spec, std::vector<std::string>& taken) {
  std::string base = spec.kind;
  if (spec.kind == "enkf") base += "-n" + std::to_string(spec.ensemble_size);
  std::string name = base;
  int suffix = 2;
  while (std::find(taken.begin(), taken.end(), name) != taken.end())
    name = base + "-" + std::to_string(suffix++);
  taken.push_back(name);
  return name;
}

std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

RmsResult rms_from_probe_series(const std::vector<Vector>& estimate_probes,
                                const std::vector<Vector>& truth_probes) {
  if (estimate_probes.empty()) throw ShapeError("rms: empty estimate sequence");
  if (truth_probes.size() < estimate_probes.size())
    throw ShapeError("rms: truth sequence shorter than estimates");
  const Index n_probes = estimate_probes.front().size();
  RmsResult out;
  out.per_probe.assign(static_cast<size_t>(n_probes), 0.0);
  double total_sq = 0.0;
  for (size_t k = 0; k < estimate_probes.size(); ++k) {
    if (estimate_probes[k].size() != n_probes || truth_probes[k].size() != n_probes)
      throw ShapeError("rms: misaligned probe vectors at step " + std::to_string(k));
    const Vector residual = estimate_probes[k] - truth_probes[k];
    for (Index p = 0; p < n_probes; ++p)
      out.per_probe[static_cast<size_t>(p)] += residual[p] * residual[p];
    total_sq += residual.squaredNorm();
  }
  const double steps = static_cast<double>(estimate_probes.size());
  for (double& v : out.per_probe) v = std::sqrt(v / steps);
  out.total = std::sqrt(total_sq / (steps * static_cast<double>(n_probes)));
  return out;
}

RmsResult rms_at_probes(const std::vector<Vector>& estimates, const std::vector<Vector>& truth,
                        const std::vector<Index>& probes) {
  if (probes.empty()) throw ShapeError("rms: empty probe set");
  std::vector<Vector> est_p, truth_p;
  est_p.reserve(estimates.size());
  truth_p.reserve(truth.size());
  for (const Vector& x : estimates) {
    for (Index p : probes)
      if (p < 0 || p >= x.size()) throw ShapeError("rms: probe index out of range");
    est_p.push_back(at_probes(x, probes));
  }
  for (const Vector& x : truth) truth_p.push_back(at_probes(x, probes));
  return rms_from_probe_series(est_p, truth_p);
}

double std_estimate(const Vector& first, const Vector& second) {
  if (first.size() != second.size()) throw ShapeError("std estimate: length mismatch");
  const Index n = first.size();
  if (n < 2) throw ShapeError("std estimate: need at least 2 cells");
  const Vector diff = first - second;
  const double mu = diff.mean();
  const double var = (diff.array() - mu).square().sum() / static_cast<double>(n - 1);
  return std::sqrt(0.5 * var);
}

ExperimentReport run_experiment(const ExperimentSetup& setup) {
  if (setup.steps < 1) throw ShapeError("experiment: steps must be positive");
  if (setup.probes.empty()) throw ShapeError("experiment: empty probe set");
  if (setup.observers.empty()) throw ShapeError("experiment: no observers requested");

  const SystemModel model = assemble_system(setup.material, setup.measurement_mask, setup.noise);
  const SystemModel observer_model = design_view(model, setup.noise);
  for (Index p : setup.probes)
    if (p < 0 || p >= model.n_x()) throw ShapeError("experiment: probe index out of range");

  const std::vector<Vector> inputs = schedule_inputs(setup.steps);
  const Trajectory truth = simulate_truth(model, inputs, setup.steps, setup.seed);

  ExperimentReport report;
  report.seed = setup.seed;
  report.config_digest = setup.config_digest;
  report.steps = setup.steps;
  report.std_pair = "x" + std::to_string(setup.steps - 1) + ",x" + std::to_string(setup.steps);
  report.probes = setup.probes;
  for (int k = 0; k < setup.steps; ++k)
    report.truth_probe_values.push_back(
        at_probes(truth.states[static_cast<size_t>(k) + 1], setup.probes));
  if (setup.snapshot_step >= 1 && setup.snapshot_step <= setup.steps)
    report.truth_snapshot = truth.states[static_cast<size_t>(setup.snapshot_step)];

  std::vector<std::string> names;
  for (size_t i = 0; i < setup.observers.size(); ++i) {
    const ObserverSpec& spec = setup.observers[i];
    ObserverResult res;
    res.name = result_name(spec, names);
    Vector previous, current;
    try {
      auto observer = build_observer(spec, observer_model, setup.seed, i);
      for (int k = 0; k < setup.steps; ++k) {
        const auto t0 = Clock::now();
        observer->step(inputs[static_cast<size_t>(k)], truth.outputs[static_cast<size_t>(k)]);
        res.step_seconds.push_back(seconds_since(t0));
        previous = std::move(current);
        current = observer->current_estimate();
        res.probe_values.push_back(at_probes(current, setup.probes));
        if (auto* lsk = dynamic_cast<const LskkfObserver*>(observer.get()))
          res.cg_iterations.push_back(lsk->last_solve().iterations);
        if (setup.snapshot_step == k + 1) res.snapshot = current;
      }
    } catch (const std::exception& e) {
      res.failed = true;
      res.failure = e.what();
    }
    if (!res.probe_values.empty()) {
      const std::vector<Vector> truth_slice(
          report.truth_probe_values.begin(),
          report.truth_probe_values.begin() + static_cast<long>(res.probe_values.size()));
      const RmsResult rms = rms_from_probe_series(res.probe_values, truth_slice);
      res.probe_rms = rms.per_probe;
      res.total_rms = rms.total;
    }
    if (previous.size() > 0 && current.size() > 0)
      res.std_estimate = std_estimate(previous, current);
    if (!res.step_seconds.empty())
      res.mean_step_seconds =
          std::accumulate(res.step_seconds.begin(), res.step_seconds.end(), 0.0) /
          static_cast<double>(res.step_seconds.size());
    report.results.push_back(std::move(res));
  }
  return report;
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);

  nlohmann::json j;
  j["config_digest"] = report.config_digest;
  j["seed"] = report.seed;
  j["steps"] = report.steps;
  j["std_pair"] = report.std_pair;
  j["probes"] = report.probes;
  j["observers"] = nlohmann::json::array();
  for (const ObserverResult& res : report.results) {
    nlohmann::json o;
    o["name"] = res.name;
    o["probe_rms"] = res.probe_rms;
    o["total_rms"] = res.total_rms;
    o["std_estimate"] = res.std_estimate;
    o["cg_iterations"] = res.cg_iterations;
    o["failed"] = res.failed;
    o["failure"] = res.failure;
    o["timing"] = {{"mean_step_seconds", res.mean_step_seconds},
                   {"step_seconds", res.step_seconds}};
    j["observers"].push_back(std::move(o));
  }
  std::ofstream json_out(dir + "/report.json");
  if (!json_out) throw std::runtime_error("report: cannot write " + dir + "/report.json");
  json_out << j.dump(2) << '\n';

  std::ofstream csv(dir + "/steps.csv");
  if (!csv) throw std::runtime_error("report: cannot write " + dir + "/steps.csv");
  csv << "k";
  const size_t n_probes = report.probes.size();
  for (size_t p = 0; p < n_probes; ++p) csv << ",truth_p" << p;
  for (const ObserverResult& res : report.results) {
    for (size_t p = 0; p < n_probes; ++p) csv << ',' << res.name << "_p" << p;
    csv << ',' << res.name << "_seconds";
    if (!res.cg_iterations.empty()) csv << ',' << res.name << "_cg_iters";
  }
  csv << '\n';
  for (int k = 0; k < report.steps; ++k) {
    const auto row = static_cast<size_t>(k);
    csv << (k + 1);
    for (size_t p = 0; p < n_probes; ++p)
      csv << ',' << format_g(report.truth_probe_values[row][static_cast<Index>(p)]);
    for (const ObserverResult& res : report.results) {
      const bool have = row < res.probe_values.size();
      for (size_t p = 0; p < n_probes; ++p)
        csv << ',' << (have ? format_g(res.probe_values[row][static_cast<Index>(p)]) : "");
      csv << ',' << (have ? format_g(res.step_seconds[row]) : "");
      if (!res.cg_iterations.empty())
        csv << ',' << (row < res.cg_iterations.size()
                           ? std::to_string(res.cg_iterations[row])
                           : "");
    }
    csv << '\n';
  }
}

BenchTable scaling_benchmark(const std::vector<Index>& sides,
                             const std::vector<ObserverSpec>& observers, int steps,
                             std::uint64_t seed) {
  if (sides.empty()) throw ShapeError("bench: empty size list");
  if (!std::is_sorted(sides.begin(), sides.end()))
    throw ShapeError("bench: sizes must be ascending");
  if (steps < 1) throw ShapeError("bench: steps must be positive");

  BenchTable table;
  for (Index side : sides) {
    ExperimentSetup setup;
    SystemModel model;
    SystemModel observer_model;
    Trajectory truth;
    const int total_steps = steps + 1;  // one warm-up step before timing
    bool size_ok = true;
    std::string size_note;
    try {
      setup = default_setup(side);
      model = assemble_system(setup.material, setup.measurement_mask, setup.noise);
      observer_model = design_view(model, setup.noise);
      truth = simulate_truth(model, schedule_inputs(total_steps), total_steps, seed);
    } catch (const std::bad_alloc&) {
      size_ok = false;
      size_note = "allocation failed";
    }
    for (size_t i = 0; i < observers.size(); ++i) {
      const ObserverSpec& spec = observers[i];
      BenchRow row;
      row.observer = spec.kind == "enkf" ? "enkf-n" + std::to_string(spec.ensemble_size)
                                         : spec.kind;
      row.n_x = side * side;
      row.ensemble_size = spec.kind == "enkf" ? spec.ensemble_size : 0;
      if (!size_ok) {
        row.skipped = true;
        row.note = size_note;
        table.rows.push_back(std::move(row));
        continue;
      }
      try {
        auto observer = build_observer(spec, observer_model, seed, i);
        std::vector<double> timings;
        for (int k = 0; k < total_steps; ++k) {
          const auto t0 = Clock::now();
          observer->step(input_sequence(k + 1), truth.outputs[static_cast<size_t>(k)]);
          const double dt = seconds_since(t0);
          if (k > 0) timings.push_back(dt);
        }
        std::sort(timings.begin(), timings.end());
        row.median_step_seconds = timings[timings.size() / 2];
        row.steps_timed = static_cast<int>(timings.size());
      } catch (const std::bad_alloc&) {
        row.skipped = true;
        row.note = "allocation failed";
      } catch (const std::exception& e) {
        row.skipped = true;
        row.note = e.what();
      }
      table.rows.push_back(std::move(row));
    }
  }

  // Least-squares slope of log(time) against log(n_x) per observer label.
  std::vector<std::string> labels;
  for (const BenchRow& row : table.rows)
    if (!row.skipped && std::find(labels.begin(), labels.end(), row.observer) == labels.end())
      labels.push_back(row.observer);
  for (const std::string& label : labels) {
    std::vector<double> lx, ly;
    for (const BenchRow& row : table.rows)
      if (!row.skipped && row.observer == label && row.median_step_seconds > 0.0) {
        lx.push_back(std::log(static_cast<double>(row.n_x)));
        ly.push_back(std::log(row.median_step_seconds));
      }
    if (lx.size() < 2) continue;
    const double n = static_cast<double>(lx.size());
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx > 0.0) table.slopes.emplace_back(label, sxy / sxx);
  }
  return table;
}

void write_bench_csv(const BenchTable& table, const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("bench: cannot write " + path);
  for (const auto& [label, slope] : table.slopes)
    csv << "# loglog_slope," << label << ',' << format_g(slope) << '\n';
  csv << "observer,n_x,ensemble_size,median_step_seconds,steps_timed,skipped,note\n";
  for (const BenchRow& row : table.rows) {
    csv << row.observer << ',' << row.n_x << ',' << row.ensemble_size << ','
        << format_g(row.median_step_seconds) << ',' << row.steps_timed << ','
        << (row.skipped ? "1" : "0") << ',' << row.note << '\n';
  }
}

ExperimentSetup build_phantom(const PhantomSpec& spec) {
  if (spec.side < 16) throw ShapeError("phantom: side must be at least 16");
  if (!(spec.spacing > 0.0)) throw ShapeError("phantom: spacing must be positive");
  if (spec.materials.size() != 2) throw ShapeError("phantom: exactly two materials");
  if (spec.loads.empty()) throw ShapeError("phantom: at least one heat load");
  if (!(spec.lesion_radius > 0.0 && spec.lesion_radius < 0.5))
    throw ShapeError("phantom: lesion radius fraction must be in (0, 0.5)");

  const Grid grid = make_grid({spec.side, spec.side}, {spec.spacing, spec.spacing});
  const double extent = static_cast<double>(spec.side) * spec.spacing;

  // Circular inclusion ("lesion") inside a homogeneous slab.
  const double cx = spec.lesion_center[0] * extent, cy = spec.lesion_center[1] * extent;
  const double radius = spec.lesion_radius * extent;
  Vector lesion = Vector::Zero(grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const auto p = grid.point(i);
    const double dxc = p[0] - cx, dyc = p[1] - cy;
    if (dxc * dxc + dyc * dyc <= radius * radius) lesion[i] = 1.0;
  }
  const Vector background = Vector::Ones(grid.size()) - lesion;
  if (lesion.sum() == 0.0 || background.sum() == 0.0)
    throw ShapeError("phantom: lesion must cover some cells and not the whole slab");

  ExperimentSetup setup;
  setup.material.grid = grid;
  setup.material.masks = MaskSet({{grid, background}, {grid, lesion}});
  setup.material.materials = spec.materials;
  setup.material.boundary_h = spec.boundary_h;
  setup.material.dt = spec.dt;

  for (const PhantomSpec::Load& load : spec.loads) {
    if (!(load.sigma > 0.0)) throw ShapeError("phantom: load sigma must be positive");
    const double sx = load.center[0] * extent, sy = load.center[1] * extent;
    const double s = load.sigma * extent;
    Vector v(grid.size());
    for (Index i = 0; i < grid.size(); ++i) {
      const auto p = grid.point(i);
      const double ddx = p[0] - sx, ddy = p[1] - sy;
      v[i] = load.peak * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * s * s));
    }
    setup.material.loads.emplace_back(grid, std::move(v));
  }

  setup.noise.process_scale = 0.004;
  setup.noise.process_kernel = {1.0, 0.008};
  setup.noise.design_scale = 0.034;
  setup.noise.r_default = 0.05;

  setup.measurement_mask = constant_field(grid, 1.0);

  // Six probes in the background material, stratified by distance to the
  // heating focus: near, mid, and far positions.
  std::vector<Index> cells = setup.material.masks.indices_of(0);
  std::stable_sort(cells.begin(), cells.end(), [&](Index a, Index b) {
    const auto pa = grid.point(a);
    const auto pb = grid.point(b);
    const double da = (pa[0] - cx) * (pa[0] - cx) + (pa[1] - cy) * (pa[1] - cy);
    const double db = (pb[0] - cx) * (pb[0] - cx) + (pb[1] - cy) * (pb[1] - cy);
    return da < db;
  });
  const double quantiles[6] = {0.05, 0.2, 0.4, 0.6, 0.8, 0.95};
  for (double q : quantiles)
    setup.probes.push_back(
        cells[static_cast<size_t>(q * static_cast<double>(cells.size() - 1))]);

  ObserverSpec lsk;
  lsk.kind = "lsk-kf";
  lsk.kernel = {0.0348, 0.008};
  lsk.cg = {1e-8, 200};
  ObserverSpec enkf;
  enkf.kind = "enkf";
  enkf.ensemble_size = 20;
  ObserverSpec rom;
  rom.kind = "rom-kf";
  ObserverSpec luen;
  luen.kind = "luenberger";
  setup.observers = {lsk, enkf, rom, luen};

  setup.steps = 17;
  setup.seed = 0;
  return setup;
}

ExperimentSetup default_setup(Index side) {
  PhantomSpec spec;
  spec.side = side;
  return build_phantom(spec);
}

}  // namespace lskkf
