#pragma once

#include "metapomdp/a2c.hpp"
#include "metapomdp/config.hpp"
#include "metapomdp/net.hpp"
#include "metapomdp/pomdp.hpp"
#include "metapomdp/regimes.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace metapomdp::harness {

struct RolloutOptions {
  bool greedy = false;
  /// Run the exact belief filter alongside the agent.
  bool track_beliefs = false;
};

/// One trial of the agent in its environment.
struct TrialRecord {
  a2c::Trajectory traj;
  /// Forward activations; h_prev columns are the states carried into each step.
  net::Unroll<double> unroll;
  std::vector<int> states;            // env state the agent acted from
  std::vector<Belief> beliefs;        // belief before each action (track_beliefs only)
  std::vector<int> episode_lengths;
  std::vector<bool> episode_capped;
  double total_reward = 0.0;
  int timesteps = 0;
};

/// Environment and regime wiring shared by every rollout of one config.
struct Setup {
  envs::EnvSpec env;
  TaskSet tasks;
  regimes::RegimeConfig regime;

  explicit Setup(const ExperimentConfig& cfg);
  Setup(const envs::EnvSpec& env, regimes::RegimeKind kind);
};

TrialRecord run_trial(const net::AgentParams& params, const Setup& setup, int task_id, Rng& rng,
                      const RolloutOptions& opts = {});

struct TaskStats {
  int trials = 0;
  double mean_return = 0.0;
  double mean_timesteps = 0.0;
};

struct EvalResult {
  double mean_return = 0.0;
  double mean_timesteps = 0.0;
  std::vector<TaskStats> per_task;
  /// Fraction of steps in episodes >= 1 taking the task-aware action.
  double late_optimal_action_rate = 0.0;
  /// Fraction of episodes >= 1 that follow the shortest path to the goal.
  double late_shortest_path_rate = 0.0;
};

/// n_rollouts trials with tasks drawn uniformly. Parameters are not touched.
EvalResult evaluate(const net::AgentParams& params, const ExperimentConfig& cfg, int n_rollouts, Rng& rng);

/// Rollouts of the belief-conditioned planner from the exact search.
EvalResult evaluate_bayes_policy(const TaskSet& ts, int n_rollouts, Rng& rng);

struct UpdateRow {
  int update = 0;
  double mean_return = 0.0;
  double mean_timesteps = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

struct EvalSnapshot {
  int update = 0;
  long long trials_consumed = 0;
  double mean_return = 0.0;
  double mean_timesteps = 0.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::vector<UpdateRow> rows;
  std::vector<EvalSnapshot> snapshots;
  EvalResult final_eval;
  net::AgentParams initial_params;
  net::AgentParams final_params;
  /// Gradient bundle of the first update, before clipping.
  net::GradientBundle first_gradient;
};

using ProgressFn = std::function<void(const UpdateRow&)>;

/// total_updates A2C updates with an evaluation snapshot every eval_every
/// updates (and at updates 0 and total_updates). Deterministic per seed.
RunRecord train_run(const ExperimentConfig& cfg, std::uint64_t seed, const ProgressFn& progress = {});

struct Curve {
  std::vector<int> updates;
  std::vector<double> mean;
  std::vector<double> std;
};

struct Aggregate {
  Curve returns;
  Curve timesteps;
  std::vector<double> final_returns;
  std::vector<double> final_timesteps;
  double final_return_mean = 0.0, final_return_std = 0.0, final_return_median = 0.0;
  double final_timesteps_mean = 0.0, final_timesteps_std = 0.0, final_timesteps_median = 0.0;
};

/// Pointwise mean and population std over seeds. Throws ConfigError if the
/// records come from different configs or have misaligned snapshots.
Aggregate aggregate_runs(const std::vector<RunRecord>& records);

double median(std::vector<double> values);

struct GradientCase {
  envs::EnvKind env = envs::EnvKind::bandit;
  regimes::RegimeKind regime = regimes::RegimeKind::rl2;
  int steps = 0;
  net::GradCheckReport clean;
  /// Same coordinates against the analytic gradient with lstm_wx sign-flipped.
  net::GradCheckReport mutated;

  bool pass() const { return clean.max_relative_error <= 1e-4 && mutated.max_relative_error >= 1e-1; }
};

/// Finite-difference check of one sampled trial for each env and regime under
/// default geometry, with small_uniform(0.5) parameters.
std::vector<GradientCase> gradient_checks(std::uint64_t seed, double eps = 1e-5, int coordinates = 200);

struct TraceRow {
  int episode = 0;
  int step = 0;
  int state = 0;
  int action = 0;
  double action_prob = 0.0;
  double reward = 0.0;
};

std::vector<TraceRow> behavior_trace(const net::AgentParams& params, const ExperimentConfig& cfg, int task_id, Rng& rng);

std::string format_trace(const std::vector<TraceRow>& rows, const ExperimentConfig& cfg);

}  // namespace metapomdp::harness
