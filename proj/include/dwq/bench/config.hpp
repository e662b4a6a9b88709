#pragma once

// Run configuration: every typed config of the library in one record, read
// from and written to a flat text format
//
//   # comment
//   space.dim = 30
//   sme.channels = damping:0.1
//
// Keys mirror the struct fields one-to-one. Unknown keys, duplicate keys and
// malformed values are errors.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dwq/control.hpp"
#include "dwq/env.hpp"
#include "dwq/rl/network.hpp"
#include "dwq/rl/ppo.hpp"

namespace dwq::bench {

enum class Scale { Desk, Full };

std::string to_string(Scale s);
Scale parse_scale(const std::string& s);

enum class ControllerKind { Null, Random, Bayesian, Markovian, Drl };

std::string to_string(ControllerKind k);
ControllerKind parse_controller_kind(const std::string& s);

struct ControlSpec {
  ControllerKind kind = ControllerKind::Bayesian;
  control::EstimateSource source = control::EstimateSource::ConditionalMean;
  double gain = 1.0;  // feedback gain multiplying the error signal
  bool ensemble = false;  // lockstep ensemble driven by the copy-averaged estimate
  int copies = 100;       // ensemble size
};

enum class Task { Quantum, Toy };

struct RunConfig {
  Scale scale = Scale::Desk;
  std::uint64_t seed = 1;
  env::QuantumEnvConfig quantum;
  ControlSpec control;
  Task task = Task::Quantum;
  rl::PpoConfig ppo;
  rl::NetworkShape network;
  env::ToyConfig toy;
  int train_iterations = 300;
  int eval_episodes = 10;
  bool eval_deterministic = true;
  int replicates = 3;
  int episodes = 10;  // per replicate for controllers that need no training

  void validate() const;
};

RunConfig default_config(Scale scale);

/// Applies `key = value` lines on top of `cfg`. `origin` names the source in
/// error messages.
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "<config>");
/// Checks every line of `text` and returns its entries in file order.
std::vector<std::pair<std::string, std::string>> parse_config_entries(std::string_view text,
                                                                      const std::string& origin = "<config>");
/// Applies one override; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);
/// Every key, in canonical order.
const std::vector<std::string>& config_keys();

/// Canonical text of every key: parsing it back reproduces `cfg`.
std::string to_config_text(const RunConfig& cfg);

/// Scale named in the text (key `scale`), if any; used to pick defaults
/// before the rest of the file is applied.
std::optional<Scale> scan_scale(std::string_view text);

/// Reads a file: defaults for the effective scale, then the file's keys.
RunConfig load_config(const std::string& path, std::optional<Scale> scale_override = std::nullopt);

}  // namespace dwq::bench
