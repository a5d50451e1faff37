#include "metapomdp/config.hpp"

#include "metapomdp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace metapomdp {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "env",           "regime",        "episodes_per_trial", "corridor.length", "corridor.start",
      "corridor.step_cap", "learning_rate", "discount",       "entropy_coef",    "grad_clip",
      "value_coef",    "trials_per_update", "total_updates",  "adam.beta1",      "adam.beta2",
      "adam.epsilon",  "init",          "init.range",         "seeds",           "out",
      "suite",         "eval.rollouts", "eval.every",         "eval.greedy",     "probe.trials",
      "jobs"};
  return keys;
}

net::NetShape ExperimentConfig::net_shape() const {
  const regimes::RegimeConfig rc = regime_config();
  return net::NetShape{rc.input_dim(), net::kHiddenSize, rc.action_count};
}

ConfigMap ExperimentConfig::to_map() const {
  ConfigMap m;
  m["env"] = envs::to_string(env.kind);
  m["regime"] = regimes::to_string(regime);
  m["episodes_per_trial"] = std::to_string(env.episodes_per_trial);
  m["corridor.length"] = std::to_string(env.corridor_length);
  m["corridor.start"] = std::to_string(env.corridor_start);
  m["corridor.step_cap"] = std::to_string(env.corridor_step_cap);
  m["learning_rate"] = format_double(hp.learning_rate);
  m["discount"] = format_double(hp.discount);
  m["entropy_coef"] = format_double(hp.entropy_coef);
  m["grad_clip"] = format_double(hp.grad_clip);
  m["value_coef"] = format_double(hp.value_coef);
  m["trials_per_update"] = std::to_string(hp.trials_per_update);
  m["total_updates"] = std::to_string(hp.total_updates);
  m["adam.beta1"] = format_double(hp.adam_beta1);
  m["adam.beta2"] = format_double(hp.adam_beta2);
  m["adam.epsilon"] = format_double(hp.adam_epsilon);
  m["init"] = init_scheme == net::InitScheme::zero ? "zero" : "small_uniform";
  m["init.range"] = format_double(init_range);
  std::string seed_text;
  for (std::size_t i = 0; i < seeds.size(); ++i) seed_text += (i ? "," : "") + std::to_string(seeds[i]);
  m["seeds"] = seed_text;
  m["out"] = out_dir;
  m["suite"] = suite;
  m["eval.rollouts"] = std::to_string(eval_rollouts);
  m["eval.every"] = std::to_string(eval_every);
  m["eval.greedy"] = eval_greedy ? "true" : "false";
  m["probe.trials"] = std::to_string(probe_trials);
  m["jobs"] = std::to_string(jobs);
  return m;
}

std::string ExperimentConfig::fingerprint() const {
  ConfigMap m = to_map();
  for (const char* k : {"seeds", "out", "suite", "jobs", "probe.trials"}) m.erase(k);
  std::string out;
  for (const auto& [k, v] : m) out += k + "=" + v + "\n";
  return out;
}

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const auto& keys = known_config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    m[key] = trim(line.substr(eq + 1));
  }
  return m;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto to_seed = [&](const std::string& s) {
    const long long v = parse_int("seeds", trim(s));
    if (v < 0) throw ConfigError("config key 'seeds': seeds must be non-negative");
    return static_cast<std::uint64_t>(v);
  };
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const std::uint64_t lo = to_seed(text.substr(0, dots));
    const std::uint64_t hi = to_seed(text.substr(dots + 2));
    if (hi < lo) throw ConfigError("config key 'seeds': empty range '" + text + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) seeds.push_back(to_seed(item));
  if (seeds.empty()) throw ConfigError("config key 'seeds': no seeds given");
  return seeds;
}

ExperimentConfig resolve_config(const ConfigMap& values) {
  const auto& keys = known_config_keys();
  for (const auto& [k, v] : values) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown config key '" + k + "'");
  }
  const auto get = [&](const std::string& k) -> const std::string* {
    auto it = values.find(k);
    return it == values.end() ? nullptr : &it->second;
  };

  ExperimentConfig cfg;
  const envs::EnvKind kind = get("env") ? envs::parse_env_kind(*get("env")) : envs::EnvKind::bandit;
  cfg.env = envs::default_spec(kind);
  cfg.hp = a2c::default_hyperparams(kind);
  if (auto v = get("regime")) cfg.regime = regimes::parse_regime(*v);

  const auto int_key = [&](const char* k, int& dst) {
    if (auto v = get(k)) dst = static_cast<int>(parse_int(k, *v));
  };
  const auto double_key = [&](const char* k, double& dst) {
    if (auto v = get(k)) dst = parse_double(k, *v);
  };
  int_key("episodes_per_trial", cfg.env.episodes_per_trial);
  int_key("corridor.length", cfg.env.corridor_length);
  int_key("corridor.start", cfg.env.corridor_start);
  int_key("corridor.step_cap", cfg.env.corridor_step_cap);
  cfg.hp.episodes_per_trial = cfg.env.episodes_per_trial;
  double_key("learning_rate", cfg.hp.learning_rate);
  double_key("discount", cfg.hp.discount);
  double_key("entropy_coef", cfg.hp.entropy_coef);
  double_key("grad_clip", cfg.hp.grad_clip);
  double_key("value_coef", cfg.hp.value_coef);
  int_key("trials_per_update", cfg.hp.trials_per_update);
  int_key("total_updates", cfg.hp.total_updates);
  double_key("adam.beta1", cfg.hp.adam_beta1);
  double_key("adam.beta2", cfg.hp.adam_beta2);
  double_key("adam.epsilon", cfg.hp.adam_epsilon);
  if (auto v = get("init")) {
    if (*v == "zero") cfg.init_scheme = net::InitScheme::zero;
    else if (*v == "small_uniform") cfg.init_scheme = net::InitScheme::small_uniform;
    else throw ConfigError("config key 'init': expected zero or small_uniform, got '" + *v + "'");
  }
  double_key("init.range", cfg.init_range);
  if (auto v = get("seeds")) cfg.seeds = parse_seed_list(*v);
  if (auto v = get("out")) cfg.out_dir = *v;
  if (auto v = get("suite")) cfg.suite = *v;
  int_key("eval.rollouts", cfg.eval_rollouts);
  int_key("eval.every", cfg.eval_every);
  if (auto v = get("eval.greedy")) cfg.eval_greedy = parse_bool("eval.greedy", *v);
  int_key("probe.trials", cfg.probe_trials);
  int_key("jobs", cfg.jobs);

  if (cfg.suite.empty()) cfg.suite = envs::to_string(kind) + "_" + regimes::to_string(cfg.regime);
  if (cfg.env.episodes_per_trial < 2) throw ConfigError("config key 'episodes_per_trial': trials need at least 2 episodes");
  if (cfg.eval_rollouts < 1) throw ConfigError("config key 'eval.rollouts' must be positive");
  if (cfg.eval_every < 1) throw ConfigError("config key 'eval.every' must be positive");
  if (cfg.probe_trials < 1) throw ConfigError("config key 'probe.trials' must be positive");
  if (cfg.jobs < 1) throw ConfigError("config key 'jobs' must be positive");
  if (!(cfg.init_range > 0.0)) throw ConfigError("config key 'init.range' must be positive");
  cfg.hp.validate();
  envs::make_env(cfg.env);  // geometry errors surface here, before any compute
  return cfg;
}

}  // namespace metapomdp
