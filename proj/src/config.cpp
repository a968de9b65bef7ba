#include "lskkf/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lskkf {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ShapeError("config." + path + ": " + msg);
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  return v.get<double>();
}

double as_positive(const json& v, const std::string& path) {
  const double d = as_number(v, path);
  if (!(d > 0.0)) fail(path, "must be positive");
  return d;
}

double as_nonnegative(const json& v, const std::string& path) {
  const double d = as_number(v, path);
  if (!(d >= 0.0)) fail(path, "must be non-negative");
  return d;
}

long as_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<long>();
}

bool as_boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

std::array<double, 2> as_fraction_pair(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [x, y]");
  std::array<double, 2> out{};
  for (size_t i = 0; i < 2; ++i) {
    out[i] = as_number(v[i], path);
    if (out[i] < 0.0 || out[i] > 1.0) fail(path, "fractions must be within [0, 1]");
  }
  return out;
}

/// Per-kind observer defaults; user entries are merged over these.
json observer_defaults(const std::string& kind) {
  if (kind == "lsk-kf")
    return {{"kind", "lsk-kf"},
            {"kernel", {{"gamma", 0.0348}, {"sigma", 0.008}}},
            {"cg_tol", 1e-8},
            {"cg_max_iter", 200}};
  if (kind == "enkf")
    return {{"kind", "enkf"}, {"ensemble_size", 20}, {"literal_innovation", false}};
  if (kind == "rom-kf")
    return {{"kind", "rom-kf"}, {"pod_energy", 0.999}, {"pod_steps_per_input", 25}};
  if (kind == "luenberger") return {{"kind", "luenberger"}, {"design_draws", 500}};
  fail("observers.kind",
       "'" + kind + "' is not one of lsk-kf, enkf, rom-kf, luenberger");
}

json profile_json(const std::string& name) {
  Index side = 0;
  if (name == "default") {
    side = 128;
  } else if (name == "small") {
    side = 32;
  } else {
    fail("profile", "'" + name + "' is not a built-in profile (default, small)");
  }
  json j;
  j["profile"] = name;
  j["seed"] = 0;
  j["steps"] = 17;
  j["snapshot_step"] = -1;
  j["out"] = "";
  j["model"] = {{"side", side},
                {"spacing", 0.002},
                {"dt", 93.0},
                {"boundary_h", 10.0},
                {"lesion_center", {0.5, 0.6}},
                {"lesion_radius", 0.15},
                {"materials",
                 json::array({{{"rho", 1000.0}, {"c", 4000.0}, {"k", 0.55}},
                              {{"rho", 1200.0}, {"c", 1700.0}, {"k", 0.30}}})},
                {"loads",
                 json::array({{{"center", {0.5, 0.6}}, {"sigma", 0.04}, {"peak", 5.0e4}},
                              {{"center", {0.3, 0.3}}, {"sigma", 0.04}, {"peak", 5.0e4}}})}};
  j["noise"] = {{"process_scale", 0.004},
                {"process_kernel", {{"gamma", 1.0}, {"sigma", 0.008}}},
                {"design_scale", 0.034},
                {"r_default", 0.05}};
  j["measurement"] = {{"kind", "all"}, {"stride", 1}};
  j["probes"] = "auto";
  j["observers"] = json::array({observer_defaults("lsk-kf"), observer_defaults("enkf"),
                                observer_defaults("rom-kf"),
                                observer_defaults("luenberger")});
  return j;
}

/// Overlays `user` onto `base`, rejecting keys absent from the defaults.
/// Arrays and scalars replace wholesale; nested objects recurse.
void merge_strict(json& base, const json& user, const std::string& path) {
  if (!user.is_object() || !base.is_object()) {
    base = user;
    return;
  }
  for (const auto& [key, val] : user.items()) {
    const std::string child = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) fail(child, "unknown key");
    merge_strict(base[key], val, child);
  }
}

void require_keys(const json& obj, const std::vector<std::string>& keys,
                  const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, val] : obj.items()) {
    (void)val;
    bool known = false;
    for (const auto& k : keys) known = known || k == key;
    if (!known) fail(path + "." + key, "unknown key");
  }
  for (const auto& k : keys)
    if (!obj.contains(k)) fail(path + "." + k, "missing required key");
}

ObserverSpec parse_observer(const json& raw, const std::string& path) {
  if (!raw.is_object() || !raw.contains("kind"))
    fail(path, "expected an object with a 'kind' key");
  const std::string kind = as_string(raw.at("kind"), path + ".kind");
  json entry = observer_defaults(kind);
  merge_strict(entry, raw, path);

  ObserverSpec spec;
  spec.kind = kind;
  if (kind == "lsk-kf") {
    require_keys(entry["kernel"], {"gamma", "sigma"}, path + ".kernel");
    spec.kernel.gamma = as_positive(entry["kernel"]["gamma"], path + ".kernel.gamma");
    spec.kernel.sigma = as_positive(entry["kernel"]["sigma"], path + ".kernel.sigma");
    spec.cg.tol = as_positive(entry["cg_tol"], path + ".cg_tol");
    const long iters = as_integer(entry["cg_max_iter"], path + ".cg_max_iter");
    if (iters < 1) fail(path + ".cg_max_iter", "must be at least 1");
    spec.cg.max_iter = static_cast<int>(iters);
  } else if (kind == "enkf") {
    const long n = as_integer(entry["ensemble_size"], path + ".ensemble_size");
    if (n < 2) fail(path + ".ensemble_size", "must be at least 2");
    spec.ensemble_size = static_cast<int>(n);
    spec.literal_innovation =
        as_boolean(entry["literal_innovation"], path + ".literal_innovation");
  } else if (kind == "rom-kf") {
    spec.pod_energy = as_positive(entry["pod_energy"], path + ".pod_energy");
    if (spec.pod_energy > 1.0) fail(path + ".pod_energy", "must be within (0, 1]");
    const long steps = as_integer(entry["pod_steps_per_input"], path + ".pod_steps_per_input");
    if (steps < 2) fail(path + ".pod_steps_per_input", "must be at least 2");
    spec.pod_steps_per_input = static_cast<int>(steps);
  } else {  // luenberger
    const long draws = as_integer(entry["design_draws"], path + ".design_draws");
    if (draws < 1) fail(path + ".design_draws", "must be at least 1");
    spec.design_draws = static_cast<int>(draws);
  }
  return spec;
}

/// Normalized entries (kind defaults materialized) for the canonical form.
json normalize_observer(const json& raw, const std::string& path) {
  if (!raw.is_object() || !raw.contains("kind"))
    fail(path, "expected an object with a 'kind' key");
  json entry = observer_defaults(as_string(raw.at("kind"), path + ".kind"));
  merge_strict(entry, raw, path);
  return entry;
}

ExperimentConfig resolve(json j) {
  ExperimentConfig cfg;
  cfg.profile = as_string(j.at("profile"), "profile");
  cfg.out = as_string(j.at("out"), "out");

  // Model geometry.
  const json& model = j.at("model");
  PhantomSpec spec;
  const long side = as_integer(model.at("side"), "model.side");
  if (side < 16) fail("model.side", "must be at least 16");
  spec.side = side;
  spec.spacing = as_positive(model.at("spacing"), "model.spacing");
  spec.dt = as_positive(model.at("dt"), "model.dt");
  spec.boundary_h = as_nonnegative(model.at("boundary_h"), "model.boundary_h");
  spec.lesion_center = as_fraction_pair(model.at("lesion_center"), "model.lesion_center");
  spec.lesion_radius = as_number(model.at("lesion_radius"), "model.lesion_radius");
  if (!(spec.lesion_radius > 0.0 && spec.lesion_radius < 0.5))
    fail("model.lesion_radius", "must be within (0, 0.5)");
  if (!model.at("materials").is_array() || model.at("materials").size() != 2)
    fail("model.materials", "expected exactly two materials");
  spec.materials.clear();
  for (size_t i = 0; i < 2; ++i) {
    const std::string path = "model.materials[" + std::to_string(i) + "]";
    const json& m = model.at("materials")[i];
    require_keys(m, {"rho", "c", "k"}, path);
    spec.materials.push_back({as_positive(m["rho"], path + ".rho"),
                              as_positive(m["c"], path + ".c"),
                              as_positive(m["k"], path + ".k")});
  }
  if (!model.at("loads").is_array() || model.at("loads").empty())
    fail("model.loads", "expected a non-empty array");
  spec.loads.clear();
  for (size_t i = 0; i < model.at("loads").size(); ++i) {
    const std::string path = "model.loads[" + std::to_string(i) + "]";
    const json& l = model.at("loads")[i];
    require_keys(l, {"center", "sigma", "peak"}, path);
    PhantomSpec::Load load{};
    load.center = as_fraction_pair(l["center"], path + ".center");
    load.sigma = as_positive(l["sigma"], path + ".sigma");
    load.peak = as_number(l["peak"], path + ".peak");
    spec.loads.push_back(load);
  }
  cfg.phantom = spec;
  cfg.setup = build_phantom(spec);

  // Noise.
  const json& noise = j.at("noise");
  cfg.setup.noise.process_scale =
      as_nonnegative(noise.at("process_scale"), "noise.process_scale");
  cfg.setup.noise.process_kernel.gamma =
      as_positive(noise.at("process_kernel").at("gamma"), "noise.process_kernel.gamma");
  cfg.setup.noise.process_kernel.sigma =
      as_positive(noise.at("process_kernel").at("sigma"), "noise.process_kernel.sigma");
  cfg.setup.noise.design_scale = as_nonnegative(noise.at("design_scale"), "noise.design_scale");
  cfg.setup.noise.r_default = as_positive(noise.at("r_default"), "noise.r_default");

  // Measurement mask.
  const json& meas = j.at("measurement");
  const std::string meas_kind = as_string(meas.at("kind"), "measurement.kind");
  const long stride = as_integer(meas.at("stride"), "measurement.stride");
  if (stride < 1) fail("measurement.stride", "must be at least 1");
  const Grid& grid = cfg.setup.material.grid;
  if (meas_kind == "all") {
    cfg.setup.measurement_mask = constant_field(grid, 1.0);
  } else if (meas_kind == "stride") {
    Vector m = Vector::Zero(grid.size());
    for (Index i = 0; i < grid.size(); i += stride) m[i] = 1.0;
    cfg.setup.measurement_mask = {grid, std::move(m)};
  } else {
    fail("measurement.kind", "'" + meas_kind + "' is not one of all, stride");
  }

  // Probes: "auto" keeps the phantom's stratified set and materializes it.
  const json& probes = j.at("probes");
  if (probes.is_string()) {
    if (probes.get<std::string>() != "auto")
      fail("probes", "expected \"auto\" or an array of cell indices");
    j["probes"] = cfg.setup.probes;
  } else if (probes.is_array() && !probes.empty()) {
    cfg.setup.probes.clear();
    for (size_t i = 0; i < probes.size(); ++i) {
      const long p = as_integer(probes[i], "probes[" + std::to_string(i) + "]");
      if (p < 0 || p >= grid.size())
        fail("probes[" + std::to_string(i) + "]", "cell index out of range");
      cfg.setup.probes.push_back(p);
    }
  } else {
    fail("probes", "expected \"auto\" or a non-empty array of cell indices");
  }

  // Observers.
  const json& observers = j.at("observers");
  if (!observers.is_array() || observers.empty())
    fail("observers", "expected a non-empty array");
  cfg.setup.observers.clear();
  json normalized = json::array();
  for (size_t i = 0; i < observers.size(); ++i) {
    const std::string path = "observers[" + std::to_string(i) + "]";
    cfg.setup.observers.push_back(parse_observer(observers[i], path));
    normalized.push_back(normalize_observer(observers[i], path));
  }
  j["observers"] = std::move(normalized);

  // Run controls.
  const long steps = as_integer(j.at("steps"), "steps");
  if (steps < 1) fail("steps", "must be at least 1");
  cfg.setup.steps = static_cast<int>(steps);
  const json& seed = j.at("seed");
  if (!seed.is_number_integer()) fail("seed", "expected a non-negative integer");
  if (!seed.is_number_unsigned() && seed.get<long long>() < 0)
    fail("seed", "expected a non-negative integer");
  cfg.setup.seed = seed.get<std::uint64_t>();
  const long snapshot = as_integer(j.at("snapshot_step"), "snapshot_step");
  if (snapshot != -1 && (snapshot < 1 || snapshot > steps))
    fail("snapshot_step", "must be -1 or within [1, steps]");
  cfg.setup.snapshot_step = static_cast<int>(snapshot);

  // Canonical form: the output directory is routing, not experiment content,
  // so it stays outside the digest.
  json canonical = j;
  canonical.erase("out");
  cfg.canonical_json = canonical.dump();
  cfg.digest = config_digest(cfg.canonical_json);
  cfg.setup.config_digest = cfg.digest;
  return cfg;
}

}  // namespace

std::string config_digest(const std::string& canonical_json) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : canonical_json) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig config_from_profile(const std::string& name) {
  return resolve(profile_json(name));
}

ExperimentConfig parse_config_text(const std::string& text) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ShapeError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ShapeError("config: top level must be an object");
  std::string profile = "default";
  if (user.contains("profile")) profile = as_string(user.at("profile"), "profile");
  json base = profile_json(profile);
  merge_strict(base, user, "");
  return resolve(std::move(base));
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ShapeError("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const CliOverrides& over) {
  if (!over.has_seed && !over.has_steps && !over.has_snapshot) return cfg;
  json j = json::parse(cfg.canonical_json);
  j["out"] = cfg.out;
  if (over.has_seed) j["seed"] = over.seed;
  if (over.has_steps) j["steps"] = over.steps;
  if (over.has_snapshot) j["snapshot_step"] = over.snapshot_step;
  return resolve(std::move(j));
}

}  // namespace lskkf
