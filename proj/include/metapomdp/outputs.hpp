#pragma once

#include "metapomdp/config.hpp"
#include "metapomdp/harness.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace metapomdp::harness {

// On-disk layout of a suite:
//   <out>/<suite>/<seed>/metrics.csv   update,mean_return,mean_timesteps,policy_loss,value_loss,entropy,grad_norm
//   <out>/<suite>/<seed>/eval.csv      update,trials,mean_return,mean_timesteps
//   <out>/<suite>/<seed>/checkpoint.bin
//   <out>/<suite>/summary.json

std::string suite_dir(const ExperimentConfig& cfg);
std::string run_dir(const ExperimentConfig& cfg, std::uint64_t seed);

void write_metrics_csv(const RunRecord& rec, const std::string& path);
void write_eval_csv(const RunRecord& rec, const std::string& path);

/// metrics.csv, eval.csv and checkpoint.bin for one seed.
void write_run_outputs(const ExperimentConfig& cfg, const RunRecord& rec);

nlohmann::json config_json(const ExperimentConfig& cfg);
nlohmann::json eval_json(const EvalResult& ev);
nlohmann::json summary_json(const ExperimentConfig& cfg, const std::vector<RunRecord>& records);

void write_json(const nlohmann::json& doc, const std::string& path);

}  // namespace metapomdp::harness
