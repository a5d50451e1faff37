#include "metapomdp/harness.hpp"

#include "metapomdp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace metapomdp::harness {

Setup::Setup(const ExperimentConfig& cfg) : Setup(cfg.env, cfg.regime) {}

Setup::Setup(const envs::EnvSpec& env_spec, regimes::RegimeKind kind)
    : env(env_spec), tasks(envs::make_env(env_spec)), regime(regimes::make_regime(kind, env_spec)) {}

TrialRecord run_trial(const net::AgentParams& params, const Setup& setup, int task_id, Rng& rng,
                      const RolloutOptions& opts) {
  const regimes::RegimeConfig& rc = setup.regime;
  if (params.shape().input_dim != rc.input_dim()) throw ShapeError("parameters do not match the regime input");
  const bool severs = regimes::resets_at_episode_boundary(rc);

  TrialRecord rec;
  a2c::Trajectory& traj = rec.traj;
  traj.task_id = task_id;
  rec.unroll.reserve(params.shape(), setup.env.kind == envs::EnvKind::bandit ? setup.env.episodes_per_trial : 64);

  TrialState st = start_trial(setup.tasks, task_id, rng);
  envs::ObservationVector obs = envs::encode_observation(setup.env, st.env_state, 0.0);
  std::optional<int> prev_action;
  bool reset = false;
  Belief belief = Belief::uniform(setup.tasks.task_count());
  if (opts.track_beliefs) belief = belief_reset_update(belief, st.env_state, setup.tasks);
  int episode_steps = 0;

  while (true) {
    const Eigen::VectorXd x = regimes::build_agent_input(rc, obs, prev_action, task_id, st.episode_index);
    net::step_recorded(params, x, reset, rec.unroll);
    const int t = rec.unroll.length - 1;
    const net::PolicySample pick =
        opts.greedy ? net::policy_greedy(rec.unroll.logits.col(t)) : net::policy_sample(rec.unroll.logits.col(t), rng);

    if (opts.track_beliefs) rec.beliefs.push_back(belief);
    rec.states.push_back(st.env_state);
    traj.reset_before.push_back(reset ? 1 : 0);
    traj.actions.push_back(pick.action);
    traj.log_probs.push_back(pick.log_prob);
    traj.episode_index.push_back(st.episode_index);

    const StepResult sr = step_trial(setup.tasks, st, pick.action, rng);
    traj.rewards.push_back(sr.reward);
    ++episode_steps;

    if (opts.track_beliefs) {
      belief = belief_update(belief,
                             Evidence{sr.state_before, pick.action, sr.reached_state, sr.reached_observation, sr.reward},
                             setup.tasks);
      if (sr.episode_done && !sr.trial_done) belief = belief_reset_update(belief, sr.next.env_state, setup.tasks);
    }
    if (sr.episode_done) {
      rec.episode_lengths.push_back(episode_steps);
      rec.episode_capped.push_back(sr.capped);
      episode_steps = 0;
    }
    if (sr.trial_done) break;

    reset = sr.episode_done && severs;
    if (reset) {
      prev_action.reset();
      obs = envs::encode_observation(setup.env, sr.next.env_state, 0.0);
    } else {
      prev_action = pick.action;
      obs = envs::encode_observation(setup.env, sr.next.env_state, sr.reward);
    }
    st = sr.next;
  }

  const int steps = rec.unroll.length;
  traj.inputs = rec.unroll.x.leftCols(steps);
  traj.logits = rec.unroll.logits.leftCols(steps);
  traj.values = rec.unroll.values.head(steps);
  rec.total_reward = traj.total_reward();
  rec.timesteps = steps;
  return rec;
}

namespace {

struct EvalAccumulator {
  std::vector<TaskStats> per_task;
  double total_return = 0.0;
  double total_steps = 0.0;
  long long late_steps = 0, late_optimal = 0;
  long long late_episodes = 0, late_shortest = 0;
  int trials = 0;

  explicit EvalAccumulator(int tasks) : per_task(tasks) {}

  void add(const envs::EnvSpec& env, int task_id, const std::vector<int>& actions, const std::vector<int>& states,
           const std::vector<int>& episode_index, const std::vector<int>& episode_lengths,
           const std::vector<bool>& capped, double ret, int steps) {
    ++trials;
    total_return += ret;
    total_steps += steps;
    TaskStats& ts = per_task[task_id];
    ts.trials += 1;
    ts.mean_return += ret;
    ts.mean_timesteps += steps;
    for (std::size_t t = 0; t < actions.size(); ++t) {
      if (episode_index[t] < 1) continue;
      ++late_steps;
      if (actions[t] == envs::known_task_action(env, task_id, states[t])) ++late_optimal;
    }
    const int shortest = envs::shortest_episode_length(env, task_id);
    std::size_t cursor = 0;
    for (std::size_t e = 0; e < episode_lengths.size(); ++e) {
      const int len = episode_lengths[e];
      if (e >= 1) {
        ++late_episodes;
        bool direct = !capped[e] && len == shortest;
        for (int k = 0; direct && k < len; ++k) {
          direct = actions[cursor + k] == envs::known_task_action(env, task_id, states[cursor + k]);
        }
        if (direct) ++late_shortest;
      }
      cursor += static_cast<std::size_t>(len);
    }
  }

  EvalResult finish() {
    EvalResult out;
    out.mean_return = total_return / std::max(trials, 1);
    out.mean_timesteps = total_steps / std::max(trials, 1);
    for (TaskStats& ts : per_task) {
      if (ts.trials > 0) {
        ts.mean_return /= ts.trials;
        ts.mean_timesteps /= ts.trials;
      }
    }
    out.per_task = per_task;
    out.late_optimal_action_rate = late_steps ? static_cast<double>(late_optimal) / late_steps : 0.0;
    out.late_shortest_path_rate = late_episodes ? static_cast<double>(late_shortest) / late_episodes : 0.0;
    return out;
  }
};

Rng eval_rng(std::uint64_t seed, int update) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(update), 0x65766131u};
  return Rng(seq);
}

}  // namespace

EvalResult evaluate(const net::AgentParams& params, const ExperimentConfig& cfg, int n_rollouts, Rng& rng) {
  const Setup setup(cfg);
  EvalAccumulator acc(setup.tasks.task_count());
  RolloutOptions opts;
  opts.greedy = cfg.eval_greedy;
  for (int i = 0; i < n_rollouts; ++i) {
    const int task = sample_task(rng, setup.tasks);
    const TrialRecord rec = run_trial(params, setup, task, rng, opts);
    acc.add(setup.env, task, rec.traj.actions, rec.states, rec.traj.episode_index, rec.episode_lengths,
            rec.episode_capped, rec.total_reward, rec.timesteps);
  }
  return acc.finish();
}

EvalResult evaluate_bayes_policy(const TaskSet& ts, int n_rollouts, Rng& rng) {
  BeliefPlanner planner(ts);
  EvalAccumulator acc(ts.task_count());
  // The qualitative rates need an EnvSpec; they are left at zero here.
  for (int i = 0; i < n_rollouts; ++i) {
    const int task = sample_task(rng, ts);
    TrialState st = start_trial(ts, task, rng);
    Belief b = belief_reset_update(Belief::uniform(ts.task_count()), st.env_state, ts);
    double ret = 0.0;
    int steps = 0;
    while (!st.trial_done) {
      const int a = planner.best_action(b, st.env_state, st.episode_index, st.step_in_episode);
      const StepResult sr = step_trial(ts, st, a, rng);
      b = belief_update(b, Evidence{sr.state_before, a, sr.reached_state, sr.reached_observation, sr.reward}, ts);
      if (sr.episode_done && !sr.trial_done) b = belief_reset_update(b, sr.next.env_state, ts);
      ret += sr.reward;
      ++steps;
      st = sr.next;
    }
    acc.trials += 1;
    acc.total_return += ret;
    acc.total_steps += steps;
    acc.per_task[task].trials += 1;
    acc.per_task[task].mean_return += ret;
    acc.per_task[task].mean_timesteps += steps;
  }
  return acc.finish();
}

RunRecord train_run(const ExperimentConfig& cfg, std::uint64_t seed, const ProgressFn& progress) {
  cfg.hp.validate();
  const Setup setup(cfg);
  const net::NetShape shape = cfg.net_shape();
  const a2c::LossSpec spec = cfg.hp.loss_spec();
  const int batch = cfg.hp.trials_per_update;

  RunRecord rec;
  rec.seed = seed;
  rec.config_fingerprint = cfg.fingerprint();

  Rng rng(seed);
  net::AgentParams params = net::init_params(shape, rng, cfg.init_scheme, cfg.init_range);
  rec.initial_params = params;
  a2c::Adam opt(shape, cfg.hp);
  net::GradientBundle grads = net::GradientBundle::zeros(shape);

  const auto snapshot = [&](int update) {
    Rng erng = eval_rng(seed, update);
    const EvalResult ev = evaluate(params, cfg, cfg.eval_rollouts, erng);
    rec.snapshots.push_back(EvalSnapshot{update, static_cast<long long>(update) * batch, ev.mean_return, ev.mean_timesteps});
    return ev;
  };
  rec.final_eval = snapshot(0);

  rec.rows.reserve(cfg.hp.total_updates);
  for (int update = 1; update <= cfg.hp.total_updates; ++update) {
    grads.set_zero();
    UpdateRow row;
    row.update = update;
    a2c::LossTerms terms;
    for (int b = 0; b < batch; ++b) {
      const int task = sample_task(rng, setup.tasks);
      const TrialRecord trial = run_trial(params, setup, task, rng);
      terms += net::backward_from_unroll(params, trial.traj, trial.unroll, spec, 1.0 / batch, grads);
      row.mean_return += trial.total_reward / batch;
      row.mean_timesteps += static_cast<double>(trial.timesteps) / batch;
    }
    if (update == 1) rec.first_gradient = grads;
    const a2c::ClipResult clipped = a2c::clip_global_norm(grads, cfg.hp.grad_clip);
    opt.step(params, clipped.grads);

    row.policy_loss = terms.policy_loss / batch;
    row.value_loss = terms.value_loss / batch;
    row.entropy = terms.entropy / batch;
    row.grad_norm = clipped.norm_before;
    rec.rows.push_back(row);
    if (progress) progress(row);

    if (update % cfg.eval_every == 0 || update == cfg.hp.total_updates) rec.final_eval = snapshot(update);
  }
  rec.final_params = params;
  return rec;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& std) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  std = std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

Aggregate aggregate_runs(const std::vector<RunRecord>& records) {
  if (records.empty()) throw UsageError("aggregate_runs needs at least one record");
  const RunRecord& first = records.front();
  for (const RunRecord& r : records) {
    if (r.config_fingerprint != first.config_fingerprint) throw ConfigError("records come from different configs");
    if (r.snapshots.size() != first.snapshots.size()) throw ConfigError("records have different snapshot counts");
    for (std::size_t i = 0; i < r.snapshots.size(); ++i) {
      if (r.snapshots[i].update != first.snapshots[i].update) throw ConfigError("records have misaligned snapshots");
    }
  }

  Aggregate agg;
  std::vector<double> col_r(records.size()), col_t(records.size());
  for (std::size_t i = 0; i < first.snapshots.size(); ++i) {
    for (std::size_t k = 0; k < records.size(); ++k) {
      col_r[k] = records[k].snapshots[i].mean_return;
      col_t[k] = records[k].snapshots[i].mean_timesteps;
    }
    double m = 0, s = 0;
    agg.returns.updates.push_back(first.snapshots[i].update);
    mean_std(col_r, m, s);
    agg.returns.mean.push_back(m);
    agg.returns.std.push_back(s);
    agg.timesteps.updates.push_back(first.snapshots[i].update);
    mean_std(col_t, m, s);
    agg.timesteps.mean.push_back(m);
    agg.timesteps.std.push_back(s);
  }
  for (const RunRecord& r : records) {
    agg.final_returns.push_back(r.final_eval.mean_return);
    agg.final_timesteps.push_back(r.final_eval.mean_timesteps);
  }
  mean_std(agg.final_returns, agg.final_return_mean, agg.final_return_std);
  mean_std(agg.final_timesteps, agg.final_timesteps_mean, agg.final_timesteps_std);
  agg.final_return_median = median(agg.final_returns);
  agg.final_timesteps_median = median(agg.final_timesteps);
  return agg;
}

std::vector<GradientCase> gradient_checks(std::uint64_t seed, double eps, int coordinates) {
  std::vector<GradientCase> out;
  for (const envs::EnvKind env : {envs::EnvKind::bandit, envs::EnvKind::corridor}) {
    for (const regimes::RegimeKind regime : {regimes::RegimeKind::rl2, regimes::RegimeKind::rl1}) {
      const ExperimentConfig cfg =
          resolve_config({{"env", envs::to_string(env)}, {"regime", regimes::to_string(regime)}});
      const Setup setup(cfg);
      Rng rng(seed);
      const net::AgentParams params = net::init_params(cfg.net_shape(), rng, net::InitScheme::small_uniform, 0.5);
      const a2c::Trajectory traj = run_trial(params, setup, sample_task(rng, setup.tasks), rng).traj;
      const a2c::LossSpec spec = cfg.hp.loss_spec();
      const auto coords = net::sample_coordinates(params.shape(), coordinates, rng);

      GradientCase c;
      c.env = env;
      c.regime = regime;
      c.steps = traj.length();
      const net::BackwardResult analytic = net::bptt_backward(params, traj, spec);
      c.clean = net::compare_to_finite_differences(params, traj, spec, analytic.grads, coords, eps);
      net::GradientBundle corrupted = analytic.grads;
      corrupted.lstm_wx *= -1.0;
      c.mutated = net::compare_to_finite_differences(params, traj, spec, corrupted, coords, eps);
      out.push_back(c);
    }
  }
  return out;
}

std::vector<TraceRow> behavior_trace(const net::AgentParams& params, const ExperimentConfig& cfg, int task_id,
                                     Rng& rng) {
  const Setup setup(cfg);
  RolloutOptions opts;
  opts.greedy = cfg.eval_greedy;
  const TrialRecord rec = run_trial(params, setup, task_id, rng, opts);
  std::vector<TraceRow> rows;
  int step = 0;
  for (int t = 0; t < rec.timesteps; ++t) {
    if (t > 0 && rec.traj.episode_index[t] != rec.traj.episode_index[t - 1]) step = 0;
    const Eigen::VectorXd probs = net::softmax(rec.traj.logits.col(t));
    rows.push_back(TraceRow{rec.traj.episode_index[t], step++, rec.states[t], rec.traj.actions[t],
                            probs(rec.traj.actions[t]), rec.traj.rewards[t]});
  }
  return rows;
}

std::string format_trace(const std::vector<TraceRow>& rows, const ExperimentConfig& cfg) {
  const bool corridor = cfg.env.kind == envs::EnvKind::corridor;
  std::ostringstream out;
  out << "episode step " << (corridor ? "cell" : "state") << " action p(action) reward\n";
  char line[128];
  for (const TraceRow& r : rows) {
    const char* action = corridor ? (r.action == envs::kLeft ? "left" : "right") : (r.action == 0 ? "arm0" : "arm1");
    std::snprintf(line, sizeof(line), "%7d %4d %4d %6s %9.4f %6g\n", r.episode + 1, r.step, r.state, action,
                  r.action_prob, r.reward);
    out << line;
  }
  return out.str();
}

}  // namespace metapomdp::harness
