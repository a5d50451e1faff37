#include "metapomdp/envs.hpp"

#include "metapomdp/errors.hpp"

#include <algorithm>

namespace metapomdp::envs {

std::string to_string(EnvKind kind) {
  return kind == EnvKind::bandit ? "bandit" : "corridor";
}

EnvKind parse_env_kind(const std::string& name) {
  if (name == "bandit") return EnvKind::bandit;
  if (name == "corridor") return EnvKind::corridor;
  throw ConfigError("unknown env '" + name + "' (expected bandit or corridor)");
}

EnvSpec default_spec(EnvKind kind) {
  EnvSpec spec;
  spec.kind = kind;
  spec.episodes_per_trial = kind == EnvKind::bandit ? 10 : 2;
  return spec;
}

TaskSet make_bandit(int episodes_per_trial) {
  constexpr int kArms = 2;
  TaskSet ts;
  ts.episodes_per_trial = episodes_per_trial;
  ts.discount = 0.80;
  for (int id = 0; id < kArms; ++id) {
    // State 0: ready to pull. State 1: arm pulled, ends the episode.
    Task t;
    t.id = id;
    t.state_count = 2;
    t.action_count = kArms;
    t.observation_count = 1;
    t.initial_dist = Eigen::Vector2d(1.0, 0.0);
    t.terminal = {false, true};
    for (int arm = 0; arm < kArms; ++arm) {
      Eigen::MatrixXd p(2, 2);
      p << 0.0, 1.0,
           0.0, 1.0;
      Eigen::MatrixXd r = Eigen::MatrixXd::Zero(2, 2);
      r(0, 1) = arm == id ? 1.0 : 0.0;
      t.transition.push_back(p);
      t.reward.push_back(r);
      t.observe.push_back(Eigen::MatrixXd::Ones(2, 1));
    }
    ts.tasks.push_back(std::move(t));
  }
  ts.validate();
  return ts;
}

TaskSet make_corridor(int length, int start, int step_cap, int episodes_per_trial) {
  if (length < 3) throw ConfigError("corridor.length must be at least 3");
  if (start <= 0 || start >= length - 1) {
    throw ConfigError("corridor.start must lie strictly between the two goal cells");
  }
  if (step_cap <= 0) throw ConfigError("corridor.step_cap must be positive");

  TaskSet ts;
  ts.episodes_per_trial = episodes_per_trial;
  ts.discount = 0.90;
  ts.step_cap = step_cap;
  const int goals[2] = {0, length - 1};
  for (int id = 0; id < 2; ++id) {
    Task t;
    t.id = id;
    t.state_count = length;
    t.action_count = 2;
    t.observation_count = length;
    t.initial_dist = Eigen::VectorXd::Zero(length);
    t.initial_dist(start) = 1.0;
    t.terminal.assign(length, false);
    t.terminal[goals[id]] = true;
    for (int action : {kLeft, kRight}) {
      Eigen::MatrixXd p = Eigen::MatrixXd::Zero(length, length);
      Eigen::MatrixXd r = Eigen::MatrixXd::Zero(length, length);
      for (int s = 0; s < length; ++s) {
        const int next = action == kLeft ? std::max(s - 1, 0) : std::min(s + 1, length - 1);
        p(s, next) = 1.0;
        if (next == goals[id] && s != goals[id]) r(s, next) = kCorridorGoalReward;
      }
      t.transition.push_back(p);
      t.reward.push_back(r);
      t.observe.push_back(Eigen::MatrixXd::Identity(length, length));
    }
    ts.tasks.push_back(std::move(t));
  }
  ts.validate();
  return ts;
}

TaskSet make_env(const EnvSpec& spec) {
  if (spec.episodes_per_trial < 1) throw ConfigError("episodes_per_trial must be positive");
  if (spec.kind == EnvKind::bandit) return make_bandit(spec.episodes_per_trial);
  return make_corridor(spec.corridor_length, spec.corridor_start, spec.corridor_step_cap, spec.episodes_per_trial);
}

Eigen::VectorXd ObservationVector::flat() const {
  Eigen::VectorXd out(dim());
  out.head(location.size()) = location;
  out(location.size()) = reward;
  return out;
}

int observation_dim(const EnvSpec& spec) {
  return spec.kind == EnvKind::bandit ? 1 : spec.corridor_length + 1;
}

ObservationVector encode_observation(const EnvSpec& spec, int location, double reward) {
  ObservationVector obs;
  obs.reward = reward;
  if (spec.kind == EnvKind::corridor) {
    if (location < 0 || location >= spec.corridor_length) throw UsageError("corridor location out of range");
    obs.location = Eigen::VectorXd::Zero(spec.corridor_length);
    obs.location(location) = 1.0;
  } else {
    obs.location.resize(0);
  }
  return obs;
}

int known_task_action(const EnvSpec& spec, int task_id, int /*state*/) {
  if (spec.kind == EnvKind::bandit) return task_id;
  return task_id == 0 ? kLeft : kRight;
}

int shortest_episode_length(const EnvSpec& spec, int task_id) {
  if (spec.kind == EnvKind::bandit) return 1;
  return task_id == 0 ? spec.corridor_start : spec.corridor_length - 1 - spec.corridor_start;
}

}  // namespace metapomdp::envs
