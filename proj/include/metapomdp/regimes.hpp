#pragma once

#include "metapomdp/envs.hpp"
#include "metapomdp/net.hpp"

#include <optional>
#include <string>

namespace metapomdp::regimes {

/// rl2: memory carried across episodes, no task labels.
/// rl1: memory reset at every episode boundary, task identity appended from episode index 1 on.
enum class RegimeKind { rl2, rl1 };

std::string to_string(RegimeKind kind);
RegimeKind parse_regime(const std::string& name);

struct RegimeConfig {
  RegimeKind kind = RegimeKind::rl2;
  int action_count = 2;
  int observation_dim = 1;
  int task_count = 2;

  int input_dim() const {
    return observation_dim + action_count + (kind == RegimeKind::rl1 ? task_count : 0);
  }
};

RegimeConfig make_regime(RegimeKind kind, const envs::EnvSpec& env);

/// [location, reward, onehot(prev_action)] plus, for rl1, the task slot
/// (zeros in episode 0, onehot(task_id) afterwards).
Eigen::VectorXd build_agent_input(const RegimeConfig& rc, const envs::ObservationVector& obs,
                                  std::optional<int> prev_action, int task_id, int episode_index);

/// rl2 keeps the state, rl1 zeroes it.
net::AgentState<double> on_episode_boundary(const RegimeConfig& rc, const net::AgentState<double>& s);

/// Whether the regime severs everything carried from the previous episode,
/// including the previous reward and action fed back as input.
inline bool resets_at_episode_boundary(const RegimeConfig& rc) { return rc.kind == RegimeKind::rl1; }

}  // namespace metapomdp::regimes
