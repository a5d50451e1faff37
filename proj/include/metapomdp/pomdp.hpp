#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <random>
#include <tuple>
#include <vector>

namespace metapomdp {

using Rng = std::mt19937_64;

/// One finite episodic POMDP. Matrices are indexed per action:
/// transition[a](s, s') = P(s' | s, a), reward[a](s, s') = R(s, a, s'),
/// observe[a](s', o) = O(o | a, s').
struct Task {
  int id = 0;
  int state_count = 0;
  int action_count = 0;
  int observation_count = 0;
  std::vector<Eigen::MatrixXd> transition;
  std::vector<Eigen::MatrixXd> reward;
  std::vector<Eigen::MatrixXd> observe;
  Eigen::VectorXd initial_dist;
  /// States whose entry ends the current episode.
  std::vector<bool> terminal;
};

/// Tasks sharing actions and discount, presented in trials of K episodes.
struct TaskSet {
  std::vector<Task> tasks;
  int episodes_per_trial = 2;
  double discount = 0.9;
  /// Forced episode end after this many steps; 0 disables the cap.
  int step_cap = 0;

  int task_count() const { return static_cast<int>(tasks.size()); }
  int action_count() const { return tasks.empty() ? 0 : tasks.front().action_count; }

  /// Throws ConfigError when any structural invariant is violated.
  void validate() const;
};

struct TrialState {
  int task_id = 0;
  int episode_index = 0;
  int env_state = 0;
  bool trial_done = false;
  int step_in_episode = 0;
};

struct StepResult {
  /// Observation of the state the agent acts from next (post-reset if the episode ended).
  int observation = 0;
  double reward = 0.0;
  bool episode_done = false;
  bool trial_done = false;
  /// Episode ended by the step cap rather than a terminal state.
  bool capped = false;
  int state_before = 0;
  /// State reached by the transition, before any reset.
  int reached_state = 0;
  /// Observation emitted at reached_state; this is what the belief filter conditions on.
  int reached_observation = 0;
  TrialState next;
};

/// Probability vector over task identities.
struct Belief {
  Eigen::VectorXd probs;

  static Belief uniform(int task_count);
  static Belief certain(int task_count, int task_id);
  int size() const { return static_cast<int>(probs.size()); }
};

/// Everything the filter needs about one transition. Within-task states are
/// observed in the environments built here, so they are passed explicitly.
struct Evidence {
  int state_before = 0;
  int action = 0;
  int state_after = 0;
  int observation = 0;
  double reward = 0.0;
};

/// Draws an index from a discrete distribution.
int sample_categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& probs);

int sample_task(Rng& rng, const TaskSet& ts);

TrialState start_trial(const TaskSet& ts, int task_id, Rng& rng);

StepResult step_trial(const TaskSet& ts, const TrialState& st, int action, Rng& rng);

/// Exact posterior over task identity after one transition. Throws
/// InconsistentEvidence if no task with positive prior mass explains it.
Belief belief_update(const Belief& b, const Evidence& ev, const TaskSet& ts);

/// Posterior after an episode reset that placed the agent in `start_state`.
/// Tasks whose initial distribution excludes the state are ruled out.
Belief belief_reset_update(const Belief& b, int start_state, const TaskSet& ts);

struct OracleValue {
  double expected_return = 0.0;
  double expected_timesteps = 0.0;
};

/// Exhaustive planner over exact beliefs. Values are undiscounted trial
/// returns; among return-optimal actions it prefers fewer expected timesteps.
/// Holds a reference to `ts`, which must outlive it.
class BeliefPlanner {
 public:
  explicit BeliefPlanner(const TaskSet& ts, std::int64_t max_nodes = 2'000'000);

  /// Expected value from trial start, averaging over observed start states.
  OracleValue solve_from(const Belief& prior);
  OracleValue value(const Belief& b, int state, int episode, int step);
  int best_action(const Belief& b, int state, int episode, int step);
  std::int64_t nodes() const { return static_cast<std::int64_t>(memo_.size()); }

 private:
  using Key = std::tuple<std::vector<std::int64_t>, int, int, int>;
  struct Node {
    OracleValue value;
    int action = 0;
  };

  std::map<int, std::pair<double, Belief>> start_branches(const Belief& b) const;
  Key make_key(const Belief& b, int state, int episode, int step) const;
  const Node& solve(const Belief& b, int state, int episode, int step);
  OracleValue action_value(const Belief& b, int state, int episode, int step, int action);

  const TaskSet& ts_;
  std::int64_t max_nodes_;
  std::map<Key, Node> memo_;
};

/// Best expected undiscounted trial return (ties broken by fewest expected
/// timesteps) over policies that condition on the exact belief, computed by
/// backward induction over reachable (belief, state, episode, step) nodes.
OracleValue bayes_optimal_return(const TaskSet& ts, std::int64_t max_nodes = 2'000'000);

struct KnownTaskOptimum {
  std::vector<OracleValue> per_task;
  OracleValue mean;
};

/// Same search with the task identity given at trial start.
KnownTaskOptimum known_task_optimum(const TaskSet& ts, std::int64_t max_nodes = 2'000'000);

}  // namespace metapomdp
