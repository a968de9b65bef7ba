#include "doctest.h"

#include <cctype>
#include <filesystem>
#include <fstream>

#include "lskkf/config.hpp"

using namespace lskkf;

TEST_CASE("the default profile resolves the case-study experiment") {
  const auto cfg = config_from_profile("default");
  CHECK(cfg.profile == "default");
  CHECK(cfg.out.empty());
  CHECK(cfg.phantom.side == 128);
  CHECK(cfg.setup.material.grid.shape[0] == 128);
  CHECK(cfg.setup.material.grid.spacing[0] == 0.002);
  CHECK(cfg.setup.material.dt == 93.0);
  CHECK(cfg.setup.material.boundary_h == 10.0);
  CHECK(cfg.setup.steps == 17);
  CHECK(cfg.setup.seed == 0);
  CHECK(cfg.setup.snapshot_step == -1);

  CHECK(cfg.setup.noise.process_scale == 0.004);
  CHECK(cfg.setup.noise.process_kernel.gamma == 1.0);
  CHECK(cfg.setup.noise.process_kernel.sigma == 0.008);
  CHECK(cfg.setup.noise.design_scale == 0.034);
  CHECK(cfg.setup.noise.r_default == 0.05);

  REQUIRE(cfg.setup.observers.size() == 4);
  const auto& lsk = cfg.setup.observers[0];
  CHECK(lsk.kind == "lsk-kf");
  CHECK(lsk.kernel.gamma == 0.0348);
  CHECK(lsk.kernel.sigma == 0.008);
  CHECK(lsk.cg.tol == 1e-8);
  CHECK(lsk.cg.max_iter == 200);
  CHECK(cfg.setup.observers[1].kind == "enkf");
  CHECK(cfg.setup.observers[1].ensemble_size == 20);
  CHECK(!cfg.setup.observers[1].literal_innovation);
  CHECK(cfg.setup.observers[2].kind == "rom-kf");
  CHECK(cfg.setup.observers[2].pod_energy == 0.999);
  CHECK(cfg.setup.observers[2].pod_steps_per_input == 25);
  CHECK(cfg.setup.observers[3].kind == "luenberger");
  CHECK(cfg.setup.observers[3].design_draws == 500);

  CHECK(cfg.setup.probes.size() == 6);
  CHECK(cfg.setup.measurement_mask.values.sum() ==
        static_cast<double>(cfg.setup.material.grid.size()));

  REQUIRE(cfg.digest.size() == 16);
  for (char c : cfg.digest) CHECK(std::isxdigit(static_cast<unsigned char>(c)));
  CHECK(cfg.setup.config_digest == cfg.digest);
  // Canonical form materializes the probe list.
  CHECK(cfg.canonical_json.find("\"probes\":[") != std::string::npos);
  CHECK(cfg.canonical_json.find("\"out\"") == std::string::npos);
}

TEST_CASE("the small profile shrinks the grid") {
  const auto cfg = config_from_profile("small");
  CHECK(cfg.phantom.side == 32);
  CHECK(cfg.setup.material.grid.size() == 32 * 32);
  CHECK(cfg.digest != config_from_profile("default").digest);
  CHECK_THROWS_WITH_AS(config_from_profile("huge"),
                       "config.profile: 'huge' is not a built-in profile (default, small)",
                       ShapeError);
}

TEST_CASE("a minimal config resolves to its profile") {
  CHECK(parse_config_text(R"({"profile":"default"})").digest ==
        config_from_profile("default").digest);
  CHECK(parse_config_text(R"({"profile":"small"})").digest ==
        config_from_profile("small").digest);
  CHECK(parse_config_text("{}").digest == config_from_profile("default").digest);
}

TEST_CASE("round-tripping the canonical form is the identity") {
  const auto cfg = config_from_profile("small");
  const auto again = parse_config_text(cfg.canonical_json);
  CHECK(again.digest == cfg.digest);
  CHECK(again.canonical_json == cfg.canonical_json);
}

TEST_CASE("equivalent spellings share a digest") {
  // Restating a default explicitly changes nothing.
  const auto a = parse_config_text(R"({"profile":"small","steps":17})");
  CHECK(a.digest == config_from_profile("small").digest);
  // Changing a value changes the digest.
  const auto b = parse_config_text(R"({"profile":"small","steps":16})");
  CHECK(b.digest != a.digest);
}

TEST_CASE("invalid values are rejected with their path named") {
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"profile":"small","model":{"dt":-1}})"),
                       "config.model.dt: must be positive", ShapeError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"model":{"sides":64}})"),
                       "config.model.sides: unknown key", ShapeError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"profile":"small","model":{"side":8}})"),
                       "config.model.side: must be at least 16", ShapeError);
  CHECK_THROWS_AS(parse_config_text("[]"), ShapeError);
  CHECK_THROWS_AS(parse_config_text("{nope"), ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"seed":-3})"), ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"seed":1.5})"), ShapeError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"steps":0})"),
                       "config.steps: must be at least 1", ShapeError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"profile":"small","snapshot_step":99})"),
                       "config.snapshot_step: must be -1 or within [1, steps]", ShapeError);
  CHECK_THROWS_WITH_AS(
      parse_config_text(R"({"noise":{"r_default":0}})"),
      "config.noise.r_default: must be positive", ShapeError);
}

TEST_CASE("observer entries merge over their kind defaults") {
  const auto cfg = parse_config_text(
      R"({"profile":"small","observers":[{"kind":"lsk-kf","cg_tol":1e-6}]})");
  REQUIRE(cfg.setup.observers.size() == 1);
  CHECK(cfg.setup.observers[0].cg.tol == 1e-6);
  CHECK(cfg.setup.observers[0].cg.max_iter == 200);   // untouched default
  CHECK(cfg.setup.observers[0].kernel.gamma == 0.0348);
  CHECK(cfg.setup.observers[0].kernel.sigma == 0.008);

  CHECK_THROWS_WITH_AS(
      parse_config_text(R"({"observers":[{"kind":"kalman"}]})"),
      "config.observers.kind: 'kalman' is not one of lsk-kf, enkf, rom-kf, luenberger",
      ShapeError);
  CHECK_THROWS_WITH_AS(
      parse_config_text(R"({"observers":[{"kind":"enkf","ensemble_size":1}]})"),
      "config.observers[0].ensemble_size: must be at least 2", ShapeError);
  CHECK_THROWS_WITH_AS(
      parse_config_text(R"({"observers":[{"kind":"rom-kf","pod_energy":1.5}]})"),
      "config.observers[0].pod_energy: must be within (0, 1]", ShapeError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"observers":[{"kind":"lsk-kf","tol":1}]})"),
                       "config.observers[0].tol: unknown key", ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"observers":[]})"), ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"observers":[{"cg_tol":1.0}]})"), ShapeError);
}

TEST_CASE("strided measurement thins the mask") {
  const auto cfg =
      parse_config_text(R"({"profile":"small","measurement":{"kind":"stride","stride":4}})");
  CHECK(cfg.setup.measurement_mask.values.sum() == 256.0);  // 1024 cells / 4
  CHECK(cfg.setup.measurement_mask.values[0] == 1.0);
  CHECK(cfg.setup.measurement_mask.values[1] == 0.0);

  CHECK_THROWS_WITH_AS(parse_config_text(R"({"measurement":{"kind":"none"}})"),
                       "config.measurement.kind: 'none' is not one of all, stride",
                       ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"measurement":{"stride":0}})"), ShapeError);
}

TEST_CASE("explicit probes replace the automatic set") {
  const auto cfg = parse_config_text(R"({"profile":"small","probes":[0,5,77]})");
  CHECK(cfg.setup.probes == std::vector<Index>{0, 5, 77});
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"profile":"small","probes":[1048576]})"),
                       "config.probes[0]: cell index out of range", ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"profile":"small","probes":[]})"), ShapeError);
  CHECK_THROWS_AS(parse_config_text(R"({"profile":"small","probes":"everywhere"})"),
                  ShapeError);
}

TEST_CASE("cli overrides re-resolve the config") {
  const auto base = config_from_profile("small");

  CliOverrides none;
  CHECK(apply_overrides(base, none).digest == base.digest);

  CliOverrides seed7;
  seed7.has_seed = true;
  seed7.seed = 7;
  const auto with_seed = apply_overrides(base, seed7);
  CHECK(with_seed.setup.seed == 7);
  CHECK(with_seed.digest != base.digest);
  // The override lands on the same digest as spelling it in the config.
  CHECK(with_seed.digest == parse_config_text(R"({"profile":"small","seed":7})").digest);

  CliOverrides run5;
  run5.has_steps = true;
  run5.steps = 5;
  run5.has_snapshot = true;
  run5.snapshot_step = 3;
  const auto shortened = apply_overrides(base, run5);
  CHECK(shortened.setup.steps == 5);
  CHECK(shortened.setup.snapshot_step == 3);

  CliOverrides bad;
  bad.has_snapshot = true;
  bad.snapshot_step = 99;
  CHECK_THROWS_AS(apply_overrides(base, bad), ShapeError);
}

TEST_CASE("the output directory stays out of the digest") {
  const auto moved = parse_config_text(R"({"profile":"small","out":"elsewhere/run1"})");
  CHECK(moved.out == "elsewhere/run1");
  CHECK(moved.digest == config_from_profile("small").digest);
}

TEST_CASE("config files load like config text") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "lskkf_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"profile":"small","seed":9})";
  }
  const auto cfg = parse_config_file(path.string());
  CHECK(cfg.setup.seed == 9);
  CHECK(cfg.digest == parse_config_text(R"({"profile":"small","seed":9})").digest);
  fs::remove(path);
  CHECK_THROWS_AS(parse_config_file((fs::temp_directory_path() / "missing.json").string()),
                  ShapeError);
}
