#include "metapomdp/outputs.hpp"

#include "metapomdp/checkpoint.hpp"
#include "metapomdp/errors.hpp"
#include "metapomdp/pomdp.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace metapomdp::harness {

namespace fs = std::filesystem;

std::string suite_dir(const ExperimentConfig& cfg) {
  return (fs::path(cfg.out_dir) / cfg.suite).string();
}

std::string run_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return (fs::path(suite_dir(cfg)) / std::to_string(seed)).string();
}

namespace {

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

}  // namespace

void write_metrics_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "update,mean_return,mean_timesteps,policy_loss,value_loss,entropy,grad_norm\n";
  char line[256];
  for (const UpdateRow& r : rec.rows) {
    std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.update, r.mean_return,
                  r.mean_timesteps, r.policy_loss, r.value_loss, r.entropy, r.grad_norm);
    out << line;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_eval_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "update,trials,mean_return,mean_timesteps\n";
  char line[160];
  for (const EvalSnapshot& s : rec.snapshots) {
    std::snprintf(line, sizeof(line), "%d,%lld,%.10g,%.10g\n", s.update, s.trials_consumed, s.mean_return,
                  s.mean_timesteps);
    out << line;
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

void write_run_outputs(const ExperimentConfig& cfg, const RunRecord& rec) {
  const std::string dir = run_dir(cfg, rec.seed);
  ensure_dir(dir);
  write_metrics_csv(rec, (fs::path(dir) / "metrics.csv").string());
  write_eval_csv(rec, (fs::path(dir) / "eval.csv").string());
  net::save_checkpoint(rec.final_params, (fs::path(dir) / "checkpoint.bin").string());
}

nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : cfg.to_map()) j[k] = v;
  return j;
}

nlohmann::json eval_json(const EvalResult& ev) {
  nlohmann::json per_task = nlohmann::json::array();
  for (const TaskStats& t : ev.per_task) {
    per_task.push_back({{"trials", t.trials}, {"mean_return", t.mean_return}, {"mean_timesteps", t.mean_timesteps}});
  }
  return {{"mean_return", ev.mean_return},
          {"mean_timesteps", ev.mean_timesteps},
          {"late_optimal_action_rate", ev.late_optimal_action_rate},
          {"late_shortest_path_rate", ev.late_shortest_path_rate},
          {"per_task", per_task}};
}

nlohmann::json summary_json(const ExperimentConfig& cfg, const std::vector<RunRecord>& records) {
  const Aggregate agg = aggregate_runs(records);
  const TaskSet ts = envs::make_env(cfg.env);
  const OracleValue bayes = bayes_optimal_return(ts);
  const KnownTaskOptimum known = known_task_optimum(ts);

  nlohmann::json seeds = nlohmann::json::array();
  nlohmann::json runs = nlohmann::json::array();
  for (const RunRecord& r : records) {
    seeds.push_back(r.seed);
    nlohmann::json run = eval_json(r.final_eval);
    run["seed"] = r.seed;
    runs.push_back(run);
  }
  nlohmann::json curve = nlohmann::json::object();
  curve["update"] = agg.returns.updates;
  curve["return_mean"] = agg.returns.mean;
  curve["return_std"] = agg.returns.std;
  curve["timesteps_mean"] = agg.timesteps.mean;
  curve["timesteps_std"] = agg.timesteps.std;

  return {{"suite", cfg.suite},
          {"env", envs::to_string(cfg.env.kind)},
          {"regime", regimes::to_string(cfg.regime)},
          {"config", config_json(cfg)},
          {"seeds", seeds},
          {"final",
           {{"return_mean", agg.final_return_mean},
            {"return_std", agg.final_return_std},
            {"return_median", agg.final_return_median},
            {"timesteps_mean", agg.final_timesteps_mean},
            {"timesteps_std", agg.final_timesteps_std},
            {"timesteps_median", agg.final_timesteps_median}}},
          {"oracle",
           {{"bayes_optimal_return", bayes.expected_return},
            {"bayes_optimal_timesteps", bayes.expected_timesteps},
            {"known_task_return", known.mean.expected_return},
            {"known_task_timesteps", known.mean.expected_timesteps}}},
          {"curve", curve},
          {"runs", runs}};
}

void write_json(const nlohmann::json& doc, const std::string& path) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) ensure_dir(parent.string());
  std::ofstream out = open_for_write(path);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace metapomdp::harness
