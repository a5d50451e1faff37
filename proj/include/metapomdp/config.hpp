#pragma once

#include "metapomdp/a2c.hpp"
#include "metapomdp/envs.hpp"
#include "metapomdp/net.hpp"
#include "metapomdp/regimes.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace metapomdp {

/// Raw key=value pairs, keys in dotted form (e.g. "corridor.length").
using ConfigMap = std::map<std::string, std::string>;

/// Fully resolved experiment configuration.
struct ExperimentConfig {
  envs::EnvSpec env;
  regimes::RegimeKind regime = regimes::RegimeKind::rl2;
  a2c::Hyperparams hp;
  net::InitScheme init_scheme = net::InitScheme::small_uniform;
  double init_range = 0.1;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = "out";
  std::string suite;
  int eval_rollouts = 100;
  int eval_every = 100;
  bool eval_greedy = false;
  int probe_trials = 200;
  int jobs = 1;

  regimes::RegimeConfig regime_config() const { return regimes::make_regime(regime, env); }
  net::NetShape net_shape() const;

  /// Fully resolved key=value view; round-trips through resolve_config.
  ConfigMap to_map() const;
  /// Canonical text of the keys that affect training results.
  std::string fingerprint() const;
};

/// Every key accepted in config files and as --key flags.
const std::vector<std::string>& known_config_keys();

/// Parses "key = value" lines; '#' starts a comment. Throws ConfigError
/// naming the key for unknown keys, IoError if the file cannot be read.
ConfigMap read_config_file(const std::string& path);
ConfigMap parse_config_text(const std::string& text);

/// Environment defaults first, then the given values. Unknown keys and
/// malformed values throw ConfigError.
ExperimentConfig resolve_config(const ConfigMap& values);

/// "0..19", "1,4,7" or "3".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace metapomdp
