#pragma once

#include <cstdint>
#include <string>

#include "lskkf/harness.hpp"

namespace lskkf {

/// A validated experiment description plus its canonical serialization. The
/// digest identifies the fully-resolved config (defaults included), so two
/// configs spelling the same experiment differently share a digest.
struct ExperimentConfig {
  std::string profile = "default";
  std::string out;  // output directory; empty means derive from the digest
  PhantomSpec phantom;
  ExperimentSetup setup;
  std::string canonical_json;
  std::string digest;  // 16 hex chars, FNV-1a 64 of canonical_json
};

/// Built-in profiles: "default" (128x128 desk scale) and "small" (32x32,
/// within the dense-oracle cap; the kernel-design scenario).
ExperimentConfig config_from_profile(const std::string& name);

/// Strict parse: unknown keys and out-of-range values are rejected with the
/// offending path named. Missing keys take the profile's defaults.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// FNV-1a 64 over the canonical serialization.
std::string config_digest(const std::string& canonical_json);

struct CliOverrides {
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool has_steps = false;
  int steps = 0;
  bool has_snapshot = false;
  int snapshot_step = -1;
};

/// Re-resolves a config with command-line overrides folded in, so the digest
/// covers exactly what will run.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const CliOverrides& over);

}  // namespace lskkf
