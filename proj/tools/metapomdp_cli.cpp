// Command-line entry point: train, eval, oracle, probe, gradcheck, trace.

#include "metapomdp/a2c.hpp"
#include "metapomdp/checkpoint.hpp"
#include "metapomdp/config.hpp"
#include "metapomdp/errors.hpp"
#include "metapomdp/harness.hpp"
#include "metapomdp/outputs.hpp"
#include "metapomdp/probe.hpp"
#include "metapomdp/suite.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace {

using namespace metapomdp;
using nlohmann::json;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kCheckFailed = 4 };

struct CommonArgs {
  std::string config_path;
  std::map<std::string, std::string> flags;
};

void add_config_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key=value config file");
  for (const std::string& key : known_config_keys()) {
    cmd->add_option("--" + key, args.flags[key], "config key " + key);
  }
}

ExperimentConfig load_config(const CommonArgs& args) {
  ConfigMap values;
  if (!args.config_path.empty()) values = read_config_file(args.config_path);
  if (const char* root = std::getenv("METAPOMDP_OUT"); root != nullptr && *root != '\0') values["out"] = root;
  for (const auto& [k, v] : args.flags) {
    if (!v.empty()) values[k] = v;
  }
  return resolve_config(values);
}

void print_json(const json& doc, const std::string& path) {
  std::cout << doc.dump(2) << "\n";
  if (!path.empty()) harness::write_json(doc, path);
}

int cmd_train(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args);
  const std::vector<harness::RunRecord> records = harness::train_suite(cfg, [](const harness::RunRecord& r) {
    std::cerr << "seed " << r.seed << ": final mean return " << r.final_eval.mean_return << ", mean timesteps "
              << r.final_eval.mean_timesteps << "\n";
  });
  std::cout << harness::summary_json(cfg, records)["final"].dump(2) << "\n";
  return kOk;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& json_out) {
  const ExperimentConfig cfg = load_config(args);
  const net::AgentParams params = net::load_checkpoint(checkpoint);
  if (!(params.shape() == cfg.net_shape())) throw ConfigError("checkpoint does not match the configured env/regime");
  Rng rng(cfg.seeds.front());
  const harness::EvalResult ev = harness::evaluate(params, cfg, cfg.eval_rollouts, rng);
  json doc = harness::eval_json(ev);
  doc["rollouts"] = cfg.eval_rollouts;
  doc["checkpoint"] = checkpoint;
  doc["config"] = harness::config_json(cfg);
  print_json(doc, json_out);
  return kOk;
}

int cmd_oracle(const CommonArgs& args, const std::string& json_out) {
  const ExperimentConfig cfg = load_config(args);
  const TaskSet ts = envs::make_env(cfg.env);
  const OracleValue bayes = bayes_optimal_return(ts);
  const KnownTaskOptimum known = known_task_optimum(ts);
  json per_task = json::array();
  for (const OracleValue& v : known.per_task) {
    per_task.push_back({{"return", v.expected_return}, {"timesteps", v.expected_timesteps}});
  }
  json doc = {{"bayes_optimal_return", bayes.expected_return},
              {"bayes_optimal_timesteps", bayes.expected_timesteps},
              {"known_task_return", known.mean.expected_return},
              {"known_task_timesteps", known.mean.expected_timesteps},
              {"known_task_per_task", per_task},
              {"config", harness::config_json(cfg)}};
  print_json(doc, json_out);
  return kOk;
}

int cmd_probe(const CommonArgs& args, const std::string& checkpoint, const std::string& json_out) {
  const ExperimentConfig cfg = load_config(args);
  const net::AgentParams trained = net::load_checkpoint(checkpoint);
  const probe::ProbeComparison cmp = probe::compare_to_untrained(trained, cfg, cfg.seeds.front());

  json reachable = json::array();
  for (const Eigen::VectorXd& b : cmp.reachable) reachable.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  json doc = {{"r2_trained", cmp.trained.r2_heldout},
              {"r2_untrained", cmp.untrained.r2_heldout},
              {"r2_trained_train_rows", cmp.trained.r2_train},
              {"r2_untrained_train_rows", cmp.untrained.r2_train},
              {"n_rows", cmp.rows},
              {"reachable_beliefs", reachable},
              {"checkpoint", checkpoint},
              {"config", harness::config_json(cfg)}};
  print_json(doc, json_out);
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, double eps, int coordinates) {
  bool ok = true;
  json report = json::array();
  for (const harness::GradientCase& c : harness::gradient_checks(seed, eps, coordinates)) {
    ok = ok && c.pass();
    report.push_back({{"env", envs::to_string(c.env)},
                      {"regime", regimes::to_string(c.regime)},
                      {"steps", c.steps},
                      {"coordinates", c.clean.coordinates_checked},
                      {"max_relative_error", c.clean.max_relative_error},
                      {"mutated_max_relative_error", c.mutated.max_relative_error},
                      {"pass", c.pass()}});
  }
  std::cout << json{{"seed", seed}, {"eps", eps}, {"checks", report}, {"pass", ok}}.dump(2) << "\n";
  return ok ? kOk : kCheckFailed;
}

int cmd_trace(const CommonArgs& args, const std::string& checkpoint, int task) {
  const ExperimentConfig cfg = load_config(args);
  net::AgentParams params;
  if (checkpoint.empty()) {
    Rng init_rng(cfg.seeds.front());
    params = net::init_params(cfg.net_shape(), init_rng, cfg.init_scheme, cfg.init_range);
  } else {
    params = net::load_checkpoint(checkpoint);
  }
  if (!(params.shape() == cfg.net_shape())) throw ConfigError("checkpoint does not match the configured env/regime");
  if (task < 0 || task > 1) throw ConfigError("--task must be 0 or 1");
  Rng rng(cfg.seeds.front());
  std::cout << harness::format_trace(harness::behavior_trace(params, cfg, task, rng), cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent meta-RL belief-state laboratory"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, oracle_args, probe_args, trace_args;
  std::string checkpoint, json_out;
  std::uint64_t grad_seed = 0;
  double grad_eps = 1e-5;
  int grad_coords = 200;
  int trace_task = 0;

  CLI::App* train = app.add_subcommand("train", "train one agent per seed and write metrics");
  add_config_flags(train, train_args);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config_flags(eval, eval_args);
  eval->add_option("--checkpoint", checkpoint, "checkpoint.bin from train")->required();
  eval->add_option("--json", json_out, "also write the JSON report here");

  CLI::App* oracle = app.add_subcommand("oracle", "exact Bayes-optimal and known-task baselines");
  add_config_flags(oracle, oracle_args);
  oracle->add_option("--json", json_out, "also write the JSON report here");

  CLI::App* probe_cmd = app.add_subcommand("probe", "decode exact beliefs from hidden states");
  add_config_flags(probe_cmd, probe_args);
  probe_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  probe_cmd->add_option("--json", json_out, "also write the JSON report here");

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of BPTT gradients");
  grad->add_option("--seed", grad_seed, "random seed");
  grad->add_option("--eps", grad_eps, "central-difference step");
  grad->add_option("--coordinates", grad_coords, "coordinates sampled per check");

  CLI::App* trace = app.add_subcommand("trace", "print one trial transcript");
  add_config_flags(trace, trace_args);
  trace->add_option("--checkpoint", checkpoint, "checkpoint (untrained initialisation if omitted)");
  trace->add_option("--task", trace_task, "task id (0 or 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version exit 0; malformed command lines count as config errors.
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args, checkpoint, json_out);
    if (oracle->parsed()) return cmd_oracle(oracle_args, json_out);
    if (probe_cmd->parsed()) return cmd_probe(probe_args, checkpoint, json_out);
    if (grad->parsed()) return cmd_gradcheck(grad_seed, grad_eps, grad_coords);
    if (trace->parsed()) return cmd_trace(trace_args, checkpoint, trace_task);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
