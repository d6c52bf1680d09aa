#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qkdsim/errors.hpp"
#include "qkdsim/keyrate.hpp"
#include "qkdsim/protocol.hpp"

namespace qkdsim {

/// Parameters of a random-waveplate channel, as given in a scenario file.
struct SynthesisSpec {
  double pmd_param = 0.0;  ///< ps/sqrt(km)
  int n_segments = 1;
  std::uint64_t seed = 0;
};

/// A complete, validated run description: device constants, the channel,
/// emitter, Alice/Bob settings, security parameters and session sizing.
struct Scenario {
  std::string name;
  SessionConfig session;
  SecurityParams security;
  std::optional<SynthesisSpec> synthesis;  ///< set when the channel was synthesized
  double analysis_duration_s = 25200.0;
  std::optional<double> calibrate_sifted_bps;
};

/// Field-level validation failure. `what()` joins all diagnostics, one per line.
class ScenarioError : public InvalidInput {
 public:
  explicit ScenarioError(std::vector<std::string> diagnostics);
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

/// Parses `key = value` lines ('#' starts a comment). Relative pattern-file paths are
/// resolved against `base_dir`. Calibration, when requested, is applied before returning.
Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace qkdsim
