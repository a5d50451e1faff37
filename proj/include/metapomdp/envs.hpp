#pragma once

#include "metapomdp/pomdp.hpp"

#include <Eigen/Core>

#include <string>

namespace metapomdp::envs {

enum class EnvKind { bandit, corridor };

std::string to_string(EnvKind kind);
EnvKind parse_env_kind(const std::string& name);

struct EnvSpec {
  EnvKind kind = EnvKind::bandit;
  int episodes_per_trial = 10;
  int corridor_length = 11;
  int corridor_start = 5;
  int corridor_step_cap = 50;
};

/// Defaults for an environment: K = 10 for the bandit, K = 2 for the corridor.
EnvSpec default_spec(EnvKind kind);

inline constexpr double kCorridorGoalReward = 10.0;
inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;

/// Two dependent arms; task i pays +1 on arm i and 0 on the other.
TaskSet make_bandit(int episodes_per_trial = 10);

/// Goals at both ends, start in between, actions {left, right}. Task 0 has its
/// goal at cell 0 and task 1 at cell length-1. Throws ConfigError on bad geometry.
TaskSet make_corridor(int length = 11, int start = 5, int step_cap = 50, int episodes_per_trial = 2);

TaskSet make_env(const EnvSpec& spec);

/// What the environment shows the agent: location one-hot (empty for the
/// bandit) and the last emitted reward, unscaled.
struct ObservationVector {
  Eigen::VectorXd location;
  double reward = 0.0;

  int dim() const { return static_cast<int>(location.size()) + 1; }
  Eigen::VectorXd flat() const;
};

/// Dimension of ObservationVector::flat() for this environment.
int observation_dim(const EnvSpec& spec);

ObservationVector encode_observation(const EnvSpec& spec, int location, double reward);

/// The action a task-aware agent takes in `state`.
int known_task_action(const EnvSpec& spec, int task_id, int state);

/// Number of steps a task-aware agent needs for one episode.
int shortest_episode_length(const EnvSpec& spec, int task_id);

}  // namespace metapomdp::envs
