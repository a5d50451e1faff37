#pragma once

#include "metapomdp/config.hpp"
#include "metapomdp/net.hpp"
#include "metapomdp/pomdp.hpp"

#include <Eigen/Core>

#include <vector>

namespace metapomdp::probe {

/// Hidden activations aligned with exact beliefs, one row per timestep.
struct StateBeliefPairs {
  /// Hidden state the policy head reads at step t (after the LSTM update).
  Eigen::MatrixXd hidden;
  /// State carried into step t, after any episode-boundary reset.
  Eigen::MatrixXd hidden_in;
  /// Exact belief over tasks before the action at step t.
  Eigen::MatrixXd beliefs;
  std::vector<int> trial;
  std::vector<int> episode;
  std::vector<bool> heldout;

  Eigen::Index rows() const { return hidden.rows(); }
};

/// Every fourth trial (index % 4 == 3) is held out.
bool is_heldout_trial(int trial_index);

StateBeliefPairs collect_pairs(const net::AgentParams& params, const ExperimentConfig& cfg, int n_trials, Rng& rng);

struct DecoderFit {
  Eigen::VectorXd weights;  // hidden coefficients followed by the intercept
  double r2_train = 0.0;
  double r2_heldout = 0.0;
};

inline constexpr double kRidge = 1e-6;

/// Ridge-regularised least squares from hidden rows to the first belief
/// coordinate, fit on training trials and scored on held-out trials.
/// Throws DegenerateTarget for constant targets and UsageError when there
/// are fewer than 10 rows per hidden unit.
DecoderFit fit_linear_decoder(const StateBeliefPairs& pairs);

struct ProbeComparison {
  DecoderFit trained;
  DecoderFit untrained;
  Eigen::Index rows = 0;
  std::vector<Eigen::VectorXd> reachable;  // distinct beliefs seen with the trained agent
};

/// Fits the decoder to `trained` and to the initialisation train_run uses for
/// `seed`, collecting cfg.probe_trials trials with the same rollout seed for both.
ProbeComparison compare_to_untrained(const net::AgentParams& trained, const ExperimentConfig& cfg, std::uint64_t seed);

/// Distinct belief vectors, rounded to 1e-9 and sorted.
std::vector<Eigen::VectorXd> distinct_beliefs(const Eigen::MatrixXd& beliefs);

/// Beliefs reachable by the exact filter over every action/outcome history
/// of up to `steps` steps, starting from the uniform prior.
std::vector<Eigen::VectorXd> enumerate_reachable_beliefs(const TaskSet& ts, int steps);

}  // namespace metapomdp::probe
