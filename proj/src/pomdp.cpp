#include "metapomdp/pomdp.hpp"

#include "metapomdp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>

namespace metapomdp {

namespace {

constexpr double kDistTol = 1e-9;
constexpr double kRewardTol = 1e-9;
constexpr double kTieTol = 1e-9;

void check_distribution(const Eigen::Ref<const Eigen::VectorXd>& p, const std::string& what) {
  if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > kDistTol) {
    throw ConfigError(what + " is not a probability distribution");
  }
}

}  // namespace

void TaskSet::validate() const {
  if (tasks.empty()) throw ConfigError("task set is empty");
  if (episodes_per_trial < 1) throw ConfigError("episodes_per_trial must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
  if (step_cap < 0) throw ConfigError("step_cap must be non-negative");
  const int actions = tasks.front().action_count;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    const std::string name = "task " + std::to_string(i);
    if (t.id != static_cast<int>(i)) throw ConfigError(name + " has mismatched id");
    if (t.action_count != actions) throw ConfigError(name + " has a different action count");
    if (t.state_count <= 0 || t.action_count <= 0 || t.observation_count <= 0) {
      throw ConfigError(name + " has an empty state, action or observation space");
    }
    if (static_cast<int>(t.transition.size()) != actions || static_cast<int>(t.reward.size()) != actions ||
        static_cast<int>(t.observe.size()) != actions) {
      throw ConfigError(name + " is missing per-action tables");
    }
    if (t.initial_dist.size() != t.state_count || static_cast<int>(t.terminal.size()) != t.state_count) {
      throw ConfigError(name + " has inconsistent state tables");
    }
    check_distribution(t.initial_dist, name + " initial distribution");
    bool any_terminal = false;
    for (bool b : t.terminal) any_terminal |= b;
    if (!any_terminal) throw ConfigError(name + " has no terminal state");
    for (int a = 0; a < actions; ++a) {
      if (t.transition[a].rows() != t.state_count || t.transition[a].cols() != t.state_count ||
          t.reward[a].rows() != t.state_count || t.reward[a].cols() != t.state_count ||
          t.observe[a].rows() != t.state_count || t.observe[a].cols() != t.observation_count) {
        throw ConfigError(name + " has a table of the wrong shape");
      }
      for (int s = 0; s < t.state_count; ++s) {
        check_distribution(t.transition[a].row(s).transpose(), name + " transition row");
        check_distribution(t.observe[a].row(s).transpose(), name + " observation row");
      }
    }
  }
}

Belief Belief::uniform(int task_count) {
  return Belief{Eigen::VectorXd::Constant(task_count, 1.0 / task_count)};
}

Belief Belief::certain(int task_count, int task_id) {
  Belief b{Eigen::VectorXd::Zero(task_count)};
  b.probs(task_id) = 1.0;
  return b;
}

int sample_categorical(Rng& rng, const Eigen::Ref<const Eigen::VectorXd>& probs) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    last_positive = static_cast<int>(i);
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

int sample_task(Rng& rng, const TaskSet& ts) {
  if (ts.tasks.empty()) throw UsageError("sample_task on an empty task set");
  std::uniform_int_distribution<int> pick(0, ts.task_count() - 1);
  return pick(rng);
}

TrialState start_trial(const TaskSet& ts, int task_id, Rng& rng) {
  if (task_id < 0 || task_id >= ts.task_count()) throw UsageError("task id out of range");
  TrialState st;
  st.task_id = task_id;
  st.env_state = sample_categorical(rng, ts.tasks[task_id].initial_dist);
  return st;
}

StepResult step_trial(const TaskSet& ts, const TrialState& st, int action, Rng& rng) {
  if (st.trial_done) throw UsageError("step_trial called on a finished trial");
  if (action < 0 || action >= ts.action_count()) throw UsageError("action out of range");
  const Task& task = ts.tasks[st.task_id];

  StepResult out;
  out.state_before = st.env_state;
  out.reached_state = sample_categorical(rng, task.transition[action].row(st.env_state).transpose());
  out.reward = task.reward[action](st.env_state, out.reached_state);
  out.reached_observation = sample_categorical(rng, task.observe[action].row(out.reached_state).transpose());

  TrialState next = st;
  next.step_in_episode += 1;
  next.env_state = out.reached_state;
  const bool terminal = task.terminal[out.reached_state];
  out.capped = !terminal && ts.step_cap > 0 && next.step_in_episode >= ts.step_cap;
  out.episode_done = terminal || out.capped;
  out.observation = out.reached_observation;

  if (out.episode_done) {
    if (st.episode_index == ts.episodes_per_trial - 1) {
      next.trial_done = true;
    } else {
      next.episode_index += 1;
      next.step_in_episode = 0;
      next.env_state = sample_categorical(rng, task.initial_dist);
      out.observation = sample_categorical(rng, task.observe[action].row(next.env_state).transpose());
    }
  }
  out.trial_done = next.trial_done;
  out.next = next;
  return out;
}

Belief belief_update(const Belief& b, const Evidence& ev, const TaskSet& ts) {
  if (b.size() != ts.task_count()) throw ShapeError("belief size does not match task count");
  Eigen::VectorXd post(b.size());
  for (int i = 0; i < b.size(); ++i) {
    const Task& t = ts.tasks[i];
    const double p_trans = t.transition[ev.action](ev.state_before, ev.state_after);
    const double p_obs = t.observe[ev.action](ev.state_after, ev.observation);
    const bool reward_match = std::abs(t.reward[ev.action](ev.state_before, ev.state_after) - ev.reward) <= kRewardTol;
    post(i) = reward_match ? b.probs(i) * p_trans * p_obs : 0.0;
  }
  const double eta = post.sum();
  if (!(eta > 0.0)) {
    throw InconsistentEvidence("transition has zero likelihood under every task in the belief");
  }
  return Belief{post / eta};
}

Belief belief_reset_update(const Belief& b, int start_state, const TaskSet& ts) {
  Eigen::VectorXd post(b.size());
  for (int i = 0; i < b.size(); ++i) {
    const Task& t = ts.tasks[i];
    post(i) = start_state < t.state_count ? b.probs(i) * t.initial_dist(start_state) : 0.0;
  }
  const double eta = post.sum();
  if (!(eta > 0.0)) throw InconsistentEvidence("reset state has zero likelihood under every task");
  return Belief{post / eta};
}

namespace {

bool better(const OracleValue& a, const OracleValue& b) {
  if (a.expected_return > b.expected_return + kTieTol) return true;
  if (a.expected_return < b.expected_return - kTieTol) return false;
  return a.expected_timesteps < b.expected_timesteps - kTieTol;
}

constexpr int kMaxEpisodeSteps = 10'000;

}  // namespace

BeliefPlanner::BeliefPlanner(const TaskSet& ts, std::int64_t max_nodes) : ts_(ts), max_nodes_(max_nodes) {
  ts_.validate();
}

OracleValue BeliefPlanner::solve_from(const Belief& prior) {
  // d0 is observed, so average over start states with the reset-conditioned belief.
  OracleValue total;
  for (const auto& [state, weighted] : start_branches(prior)) {
    const OracleValue v = solve(weighted.second, state, 0, 0).value;
    total.expected_return += weighted.first * v.expected_return;
    total.expected_timesteps += weighted.first * v.expected_timesteps;
  }
  return total;
}

OracleValue BeliefPlanner::value(const Belief& b, int state, int episode, int step) {
  return solve(b, state, episode, step).value;
}

int BeliefPlanner::best_action(const Belief& b, int state, int episode, int step) {
  return solve(b, state, episode, step).action;
}

// state -> (probability, posterior)
std::map<int, std::pair<double, Belief>> BeliefPlanner::start_branches(const Belief& b) const {
  std::map<int, std::pair<double, Belief>> out;
  int states = 0;
  for (const Task& t : ts_.tasks) states = std::max(states, t.state_count);
  for (int s = 0; s < states; ++s) {
    double q = 0.0;
    for (int i = 0; i < b.size(); ++i) {
      if (s < ts_.tasks[i].state_count) q += b.probs(i) * ts_.tasks[i].initial_dist(s);
    }
    if (q > 0.0) out.emplace(s, std::make_pair(q, belief_reset_update(b, s, ts_)));
  }
  return out;
}

BeliefPlanner::Key BeliefPlanner::make_key(const Belief& b, int state, int episode, int step) const {
  std::vector<std::int64_t> q(b.size());
  for (int i = 0; i < b.size(); ++i) q[i] = std::llround(b.probs(i) * 1e12);
  return {std::move(q), state, episode, step};
}

const BeliefPlanner::Node& BeliefPlanner::solve(const Belief& b, int state, int episode, int step) {
  if (step > kMaxEpisodeSteps) {
    throw SearchSpaceError("episode length unbounded; set a step cap for exhaustive search");
  }
  Key key = make_key(b, state, episode, step);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;
  if (nodes() >= max_nodes_) {
    throw SearchSpaceError("belief search exceeded " + std::to_string(max_nodes_) + " nodes");
  }

  Node best{{-1e300, 1e300}, 0};
  for (int a = 0; a < ts_.action_count(); ++a) {
    const OracleValue v = action_value(b, state, episode, step, a);
    if (better(v, best.value)) best = Node{v, a};
  }
  return memo_.emplace(std::move(key), best).first->second;
}

OracleValue BeliefPlanner::action_value(const Belief& b, int state, int episode, int step, int action) {
  // Group outcomes the agent can tell apart: (next state, observation, reward, episode ended).
  struct Outcome {
    double reward = 0.0;
    bool terminal = false;
    Eigen::VectorXd mass;
  };
  std::map<std::tuple<int, int, double, bool>, Outcome> outcomes;
  for (int i = 0; i < b.size(); ++i) {
    if (b.probs(i) <= 0.0) continue;
    const Task& t = ts_.tasks[i];
    for (int s2 = 0; s2 < t.state_count; ++s2) {
      const double p = t.transition[action](state, s2);
      if (p <= 0.0) continue;
      for (int o = 0; o < t.observation_count; ++o) {
        const double q = t.observe[action](s2, o);
        if (q <= 0.0) continue;
        const double r = t.reward[action](state, s2);
        auto [it, inserted] = outcomes.try_emplace({s2, o, r, t.terminal[s2]});
        if (inserted) {
          it->second.reward = r;
          it->second.terminal = t.terminal[s2];
          it->second.mass = Eigen::VectorXd::Zero(b.size());
        }
        it->second.mass(i) += b.probs(i) * p * q;
      }
    }
  }

  OracleValue total;
  for (const auto& [key, out] : outcomes) {
    const double prob = out.mass.sum();
    const Belief post{out.mass / prob};
    const int s2 = std::get<0>(key);
    const bool ended = out.terminal || (ts_.step_cap > 0 && step + 1 >= ts_.step_cap);
    OracleValue cont;
    if (ended) {
      if (episode + 1 < ts_.episodes_per_trial) {
        for (const auto& [s0, weighted] : start_branches(post)) {
          const OracleValue v = solve(weighted.second, s0, episode + 1, 0).value;
          cont.expected_return += weighted.first * v.expected_return;
          cont.expected_timesteps += weighted.first * v.expected_timesteps;
        }
      }
    } else {
      cont = solve(post, s2, episode, step + 1).value;
    }
    total.expected_return += prob * (out.reward + cont.expected_return);
    total.expected_timesteps += prob * (1.0 + cont.expected_timesteps);
  }
  return total;
}

OracleValue bayes_optimal_return(const TaskSet& ts, std::int64_t max_nodes) {
  BeliefPlanner planner(ts, max_nodes);
  return planner.solve_from(Belief::uniform(ts.task_count()));
}

KnownTaskOptimum known_task_optimum(const TaskSet& ts, std::int64_t max_nodes) {
  ts.validate();
  KnownTaskOptimum out;
  for (int i = 0; i < ts.task_count(); ++i) {
    BeliefPlanner planner(ts, max_nodes);
    const OracleValue v = planner.solve_from(Belief::certain(ts.task_count(), i));
    out.per_task.push_back(v);
    out.mean.expected_return += v.expected_return / ts.task_count();
    out.mean.expected_timesteps += v.expected_timesteps / ts.task_count();
  }
  return out;
}

}  // namespace metapomdp
