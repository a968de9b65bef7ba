#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "lskkf/config.hpp"
#include "lskkf/export.hpp"
#include "lskkf/harness.hpp"
#include "lskkf/oracle.hpp"

namespace {

using namespace lskkf;

int configure_threads() {
  const char* env = std::getenv("LSKKF_THREADS");
  int threads = 1;
  if (env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0) {
      std::cerr << "error: LSKKF_THREADS must be a non-negative integer\n";
      return -1;
    }
    threads = v == 0 ? static_cast<int>(std::thread::hardware_concurrency())
                     : static_cast<int>(v);
    if (threads < 1) threads = 1;
  }
  Eigen::setNbThreads(threads);
  return threads;
}

ExperimentConfig load_config(const std::string& config_path, const std::string& profile) {
  if (!config_path.empty()) return parse_config_file(config_path);
  return config_from_profile(profile);
}

std::string existing_digest(const std::string& dir) {
  std::ifstream in(dir + "/report.json");
  if (!in) return {};
  try {
    nlohmann::json j;
    in >> j;
    return j.value("config_digest", std::string{});
  } catch (...) {
    return {};
  }
}

ObserverSpec parse_bench_observer(const std::string& token) {
  ObserverSpec spec;
  if (token.rfind("enkf-n", 0) == 0) {
    spec.kind = "enkf";
    const int n = std::atoi(token.c_str() + 6);
    if (n < 2) throw ShapeError("bench: bad observer token '" + token + "'");
    spec.ensemble_size = n;
    return spec;
  }
  if (token != "lsk-kf" && token != "enkf" && token != "rom-kf" && token != "luenberger")
    throw ShapeError("bench: observer '" + token +
                     "' is not one of lsk-kf, enkf, enkf-nN, rom-kf, luenberger");
  spec.kind = token;
  return spec;
}

int cmd_run(const ExperimentConfig& cfg, const std::string& out_flag, bool force) {
  std::string out = !out_flag.empty() ? out_flag
                    : !cfg.out.empty() ? cfg.out
                                       : "runs/" + cfg.digest;
  const std::string previous = existing_digest(out);
  if (!previous.empty() && previous != cfg.digest && !force) {
    std::cerr << "error: " << out << " holds a report for config " << previous
              << "; pass --force to overwrite with " << cfg.digest << "\n";
    return 1;
  }

  const ExperimentReport report = run_experiment(cfg.setup);
  write_report(report, out);
  std::ofstream cfg_out(out + "/config.json");
  if (!cfg_out) throw std::runtime_error("run: cannot write " + out + "/config.json");
  cfg_out << cfg.canonical_json << '\n';

  const Grid& grid = cfg.setup.material.grid;
  if (report.truth_snapshot.size() > 0) {
    const ScalarField truth{grid, report.truth_snapshot};
    write_sf1(truth, out + "/snapshot_truth.sf1");
    write_pgm16(truth, out + "/snapshot_truth.pgm");
  }
  for (const ObserverResult& res : report.results) {
    if (res.snapshot.size() == 0) continue;
    const ScalarField field{grid, res.snapshot};
    write_sf1(field, out + "/snapshot_" + res.name + ".sf1");
    write_pgm16(field, out + "/snapshot_" + res.name + ".pgm");
  }

  std::cout << "config " << cfg.digest << "  seed " << report.seed << "  steps "
            << report.steps << "  ->  " << out << "\n";
  for (const ObserverResult& res : report.results) {
    if (res.failed) {
      std::cout << "  " << res.name << ": FAILED after " << res.probe_values.size()
                << " steps: " << res.failure << "\n";
      continue;
    }
    char line[160];
    std::snprintf(line, sizeof line,
                  "  %-12s total_rms %.4f K  std %.4f K  mean_step %.4f s", res.name.c_str(),
                  res.total_rms, res.std_estimate, res.mean_step_seconds);
    std::cout << line << "\n";
  }
  return 0;
}

int cmd_bench(const std::vector<long>& sides, const std::vector<std::string>& tokens,
              int steps, std::uint64_t seed, const std::string& out) {
  std::vector<Index> side_list(sides.begin(), sides.end());
  std::vector<ObserverSpec> specs;
  for (const std::string& token : tokens) specs.push_back(parse_bench_observer(token));
  const BenchTable table = scaling_benchmark(side_list, specs, steps, seed);
  std::filesystem::create_directories(out);
  write_bench_csv(table, out + "/bench.csv");
  for (const BenchRow& row : table.rows) {
    char line[160];
    if (row.skipped) {
      std::snprintf(line, sizeof line, "  %-12s n=%-8lld SKIPPED (%s)", row.observer.c_str(),
                    static_cast<long long>(row.n_x), row.note.c_str());
    } else {
      std::snprintf(line, sizeof line, "  %-12s n=%-8lld median_step %.5f s",
                    row.observer.c_str(), static_cast<long long>(row.n_x),
                    row.median_step_seconds);
    }
    std::cout << line << "\n";
  }
  for (const auto& [label, slope] : table.slopes)
    std::cout << "  slope(" << label << ") = " << slope << "\n";
  std::cout << "  wrote " << out << "/bench.csv\n";
  return 0;
}

int cmd_design_kernel(const ExperimentConfig& cfg, const std::vector<double>& gammas,
                      const std::vector<double>& sigmas, const std::string& out) {
  // The kernel models the uncertainty the observers are designed against, so
  // the reference Riccati solve runs at the design noise level.
  NoiseConfig noise = cfg.setup.noise;
  if (noise.design_scale >= 0.0) noise.process_scale = noise.design_scale;
  const SystemModel model =
      assemble_system(cfg.setup.material, cfg.setup.measurement_mask, noise);
  std::vector<GaussianKernel> candidates;
  for (double s : sigmas)
    for (double g : gammas) candidates.push_back({g, s});
  const KernelFit fit = fit_kernel_params(model, candidates);
  char line[160];
  std::snprintf(line, sizeof line,
                "gamma %.6g  sigma %.6g  score %.6g  amplitude_gamma %.6g", fit.best.gamma,
                fit.best.sigma, fit.best_score, fit.amplitude_gamma);
  std::cout << line << "\n";
  if (!out.empty()) {
    nlohmann::json j;
    j["config_digest"] = cfg.digest;
    j["gamma"] = fit.best.gamma;
    j["sigma"] = fit.best.sigma;
    j["score"] = fit.best_score;
    j["amplitude_gamma"] = fit.amplitude_gamma;
    j["candidates"] = nlohmann::json::array();
    for (size_t i = 0; i < candidates.size(); ++i)
      j["candidates"].push_back({{"gamma", candidates[i].gamma},
                                 {"sigma", candidates[i].sigma},
                                 {"score", fit.scores[i]}});
    std::ofstream f(out);
    if (!f) throw std::runtime_error("design-kernel: cannot write " + out);
    f << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_cond_exp(const ExperimentConfig& cfg, long index, double value,
                 const std::string& out, const std::string& format) {
  const GaussianKernel* kernel = nullptr;
  for (const ObserverSpec& spec : cfg.setup.observers)
    if (spec.kind == "lsk-kf") {
      kernel = &spec.kernel;
      break;
    }
  if (!kernel) throw ShapeError("cond-exp: config has no lsk-kf observer to take the kernel from");
  const Grid& grid = cfg.setup.material.grid;
  const LinOp L = make_masked_kernel(cfg.setup.material.masks, *kernel, grid);
  const ScalarField field = conditional_expectation(*L, grid, index, value);
  if (format == "sf1") {
    write_sf1(field, out);
  } else if (format == "csv") {
    write_sf1_csv(field, out);
  } else if (format == "pgm") {
    write_pgm16(field, out);
  } else {
    throw ShapeError("cond-exp: format '" + format + "' is not one of sf1, csv, pgm");
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_export(const std::string& in, const std::string& out, const std::string& format,
               int slice_axis, long slice_index) {
  ScalarField field = read_sf1(in);
  if (slice_axis >= 0) field = slice_field(field, slice_axis, slice_index);
  if (format == "sf1") {
    write_sf1(field, out);
  } else if (format == "csv") {
    write_sf1_csv(field, out);
  } else if (format == "pgm") {
    write_pgm16(field, out);
  } else {
    throw ShapeError("export: format '" + format + "' is not one of sf1, csv, pgm");
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-free approximate Kalman filtering toolkit"};
  app.require_subcommand(1);

  std::string config_path, profile = "default", out, format = "sf1";
  std::uint64_t seed = 0;
  bool force = false;
  int steps = 0, snapshot = -1;

  auto* run = app.add_subcommand("run", "Run an estimation experiment");
  run->add_option("--config", config_path, "Experiment JSON config");
  run->add_option("--profile", profile, "Built-in profile (default, small)");
  auto* run_seed = run->add_option("--seed", seed, "Override the config seed");
  auto* run_steps = run->add_option("--steps", steps, "Override the step count");
  auto* run_snapshot =
      run->add_option("--snapshot-step", snapshot, "Capture full estimates at this step");
  run->add_option("--out", out, "Output directory");
  run->add_flag("--force", force, "Overwrite results from a different config");

  std::vector<long> sides{64, 128};
  std::vector<std::string> observers{"lsk-kf", "enkf-n20"};
  int bench_steps = 5;
  auto* bench = app.add_subcommand("bench", "Per-step timing across grid sizes");
  bench->add_option("--sides", sides, "Square grid side lengths, ascending")
      ->delimiter(',');
  bench->add_option("--observers", observers,
                    "Observer tokens: lsk-kf, enkf-nN, rom-kf, luenberger")
      ->delimiter(',');
  bench->add_option("--steps", bench_steps, "Timed steps per cell");
  bench->add_option("--seed", seed, "Simulation seed");
  bench->add_option("--out", out, "Output directory")->required();

  std::vector<double> gammas{0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
  std::vector<double> sigmas{0.004, 0.006, 0.008, 0.012, 0.016};
  auto* design = app.add_subcommand("design-kernel",
                                    "Fit kernel parameters against a small dense model");
  design->add_option("--config", config_path, "Experiment JSON config");
  design->add_option("--profile", profile, "Built-in profile; 'small' fits the dense cap")
      ->default_val("small");
  design->add_option("--gammas", gammas, "Candidate gamma values")->delimiter(',');
  design->add_option("--sigmas", sigmas, "Candidate sigma values (m)")->delimiter(',');
  design->add_option("--out", out, "Write the fit and all scores as JSON");

  long index = 0;
  double value = 1.0;
  auto* cond = app.add_subcommand("cond-exp",
                                  "Export the kernel's conditional-expectation field");
  cond->add_option("--config", config_path, "Experiment JSON config");
  cond->add_option("--profile", profile, "Built-in profile (default, small)");
  cond->add_option("--index", index, "Flat cell index to condition on")->required();
  cond->add_option("--value", value, "Conditioned value at the cell");
  cond->add_option("--out", out, "Output file")->required();
  cond->add_option("--format", format, "sf1, csv, or pgm");

  std::string in_path;
  int slice_axis = -1;
  long slice_index = 0;
  auto* exp = app.add_subcommand("export", "Convert a stored field (sf1 to sf1/csv/pgm)");
  exp->add_option("--in", in_path, "Input SF1 file")->required();
  exp->add_option("--out", out, "Output file")->required();
  exp->add_option("--format", format, "sf1, csv, or pgm")->default_val("csv");
  exp->add_option("--slice-axis", slice_axis, "Axis to fix (0-based)");
  exp->add_option("--slice-index", slice_index, "Index along the fixed axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (configure_threads() < 0) return 1;

  try {
    if (app.got_subcommand(run)) {
      ExperimentConfig cfg = load_config(config_path, profile);
      CliOverrides over;
      over.has_seed = run_seed->count() > 0;
      over.seed = seed;
      over.has_steps = run_steps->count() > 0;
      over.steps = steps;
      over.has_snapshot = run_snapshot->count() > 0;
      over.snapshot_step = snapshot;
      cfg = apply_overrides(cfg, over);
      return cmd_run(cfg, out, force);
    }
    if (app.got_subcommand(bench)) return cmd_bench(sides, observers, bench_steps, seed, out);
    if (app.got_subcommand(design)) {
      return cmd_design_kernel(load_config(config_path, profile), gammas, sigmas, out);
    }
    if (app.got_subcommand(cond)) {
      return cmd_cond_exp(load_config(config_path, profile), index, value, out, format);
    }
    if (app.got_subcommand(exp)) {
      return cmd_export(in_path, out, format, slice_axis, slice_index);
    }
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
