#include "metapomdp/probe.hpp"

#include "metapomdp/errors.hpp"
#include "metapomdp/harness.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <set>
#include <tuple>

namespace metapomdp::probe {

bool is_heldout_trial(int trial_index) { return trial_index % 4 == 3; }

StateBeliefPairs collect_pairs(const net::AgentParams& params, const ExperimentConfig& cfg, int n_trials, Rng& rng) {
  const harness::Setup setup(cfg);
  harness::RolloutOptions opts;
  opts.track_beliefs = true;
  opts.greedy = cfg.eval_greedy;

  std::vector<harness::TrialRecord> trials;
  trials.reserve(n_trials);
  Eigen::Index total = 0;
  for (int i = 0; i < n_trials; ++i) {
    const int task = sample_task(rng, setup.tasks);
    trials.push_back(harness::run_trial(params, setup, task, rng, opts));
    total += trials.back().timesteps;
  }

  const int hidden = params.shape().hidden;
  StateBeliefPairs pairs;
  pairs.hidden.resize(total, hidden);
  pairs.hidden_in.resize(total, hidden);
  pairs.beliefs.resize(total, setup.tasks.task_count());
  Eigen::Index row = 0;
  for (int i = 0; i < n_trials; ++i) {
    const harness::TrialRecord& rec = trials[i];
    for (int t = 0; t < rec.timesteps; ++t, ++row) {
      pairs.hidden.row(row) = rec.unroll.h.col(t).transpose();
      pairs.hidden_in.row(row) = rec.unroll.h_prev.col(t).transpose();
      pairs.beliefs.row(row) = rec.beliefs[t].probs.transpose();
      pairs.trial.push_back(i);
      pairs.episode.push_back(rec.traj.episode_index[t]);
      pairs.heldout.push_back(is_heldout_trial(i));
    }
  }
  return pairs;
}

namespace {

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
  const double ss_tot = (y.array() - y.mean()).square().sum();
  if (!(ss_tot > 0.0)) throw DegenerateTarget("belief target is constant; R^2 is undefined");
  return 1.0 - (y - pred).squaredNorm() / ss_tot;
}

}  // namespace

DecoderFit fit_linear_decoder(const StateBeliefPairs& pairs) {
  const Eigen::Index n = pairs.rows();
  const Eigen::Index d = pairs.hidden.cols();
  if (n < 10 * d) throw UsageError("decoder needs at least 10 rows per hidden unit");

  Eigen::Index n_train = 0;
  for (bool h : pairs.heldout) n_train += h ? 0 : 1;
  const Eigen::Index n_test = n - n_train;
  if (n_train == 0 || n_test == 0) throw UsageError("decoder needs both training and held-out rows");

  Eigen::MatrixXd x_train(n_train, d + 1), x_test(n_test, d + 1);
  Eigen::VectorXd y_train(n_train), y_test(n_test);
  for (Eigen::Index r = 0, i = 0, j = 0; r < n; ++r) {
    if (pairs.heldout[r]) {
      x_test.row(j) << pairs.hidden.row(r), 1.0;
      y_test(j++) = pairs.beliefs(r, 0);
    } else {
      x_train.row(i) << pairs.hidden.row(r), 1.0;
      y_train(i++) = pairs.beliefs(r, 0);
    }
  }

  Eigen::MatrixXd gram = x_train.transpose() * x_train;
  gram.diagonal().array() += kRidge;
  DecoderFit fit;
  fit.weights = gram.ldlt().solve(x_train.transpose() * y_train);
  fit.r2_train = r_squared(y_train, x_train * fit.weights);
  fit.r2_heldout = r_squared(y_test, x_test * fit.weights);
  return fit;
}

namespace {

std::vector<std::int64_t> belief_key(const Eigen::VectorXd& b) {
  std::vector<std::int64_t> k(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) k[i] = std::llround(b(i) * 1e9);
  return k;
}

struct ReachSearch {
  const TaskSet& ts;
  int steps;
  std::set<std::vector<std::int64_t>> found;
  std::set<std::tuple<std::vector<std::int64_t>, int, int, int, int>> visited;

  void visit(const Belief& b, int state, int episode, int step_in_episode, int depth) {
    if (depth >= steps) return;
    const auto key = belief_key(b.probs);
    if (!visited.emplace(key, state, episode, step_in_episode, depth).second) return;
    found.insert(key);
    for (int a = 0; a < ts.action_count(); ++a) {
      for (int i = 0; i < ts.task_count(); ++i) {
        if (b.probs(i) <= 0.0) continue;
        const Task& t = ts.tasks[i];
        for (int s2 = 0; s2 < t.state_count; ++s2) {
          if (t.transition[a](state, s2) <= 0.0) continue;
          for (int o = 0; o < t.observation_count; ++o) {
            if (t.observe[a](s2, o) <= 0.0) continue;
            const Belief post = belief_update(b, Evidence{state, a, s2, o, t.reward[a](state, s2)}, ts);
            const bool ended =
                t.terminal[s2] || (ts.step_cap > 0 && step_in_episode + 1 >= ts.step_cap);
            if (!ended) {
              visit(post, s2, episode, step_in_episode + 1, depth + 1);
            } else if (episode + 1 < ts.episodes_per_trial) {
              for (int s0 = 0; s0 < t.state_count; ++s0) {
                if (t.initial_dist(s0) <= 0.0) continue;
                visit(belief_reset_update(post, s0, ts), s0, episode + 1, 0, depth + 1);
              }
            }
          }
        }
      }
    }
  }
};

}  // namespace

std::vector<Eigen::VectorXd> distinct_beliefs(const Eigen::MatrixXd& beliefs) {
  std::set<std::vector<std::int64_t>> keys;
  for (Eigen::Index r = 0; r < beliefs.rows(); ++r) keys.insert(belief_key(beliefs.row(r).transpose()));
  std::vector<Eigen::VectorXd> out;
  for (const auto& k : keys) {
    Eigen::VectorXd v(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) v(i) = static_cast<double>(k[i]) * 1e-9;
    out.push_back(v);
  }
  return out;
}

std::vector<Eigen::VectorXd> enumerate_reachable_beliefs(const TaskSet& ts, int steps) {
  ReachSearch search{ts, steps, {}, {}};
  for (int i = 0; i < ts.task_count(); ++i) {
    for (int s0 = 0; s0 < ts.tasks[i].state_count; ++s0) {
      if (ts.tasks[i].initial_dist(s0) <= 0.0) continue;
      search.visit(belief_reset_update(Belief::uniform(ts.task_count()), s0, ts), s0, 0, 0, 0);
    }
  }
  std::vector<Eigen::VectorXd> out;
  for (const auto& k : search.found) {
    Eigen::VectorXd v(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) v(i) = static_cast<double>(k[i]) * 1e-9;
    out.push_back(v);
  }
  return out;
}

ProbeComparison compare_to_untrained(const net::AgentParams& trained, const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!(trained.shape() == cfg.net_shape())) throw ConfigError("parameters do not match the configured env/regime");
  Rng init_rng(seed);
  const net::AgentParams untrained = net::init_params(cfg.net_shape(), init_rng, cfg.init_scheme, cfg.init_range);

  Rng rng_a(seed + 1000003), rng_b(seed + 1000003);
  const StateBeliefPairs pairs_t = collect_pairs(trained, cfg, cfg.probe_trials, rng_a);
  const StateBeliefPairs pairs_u = collect_pairs(untrained, cfg, cfg.probe_trials, rng_b);
  ProbeComparison out;
  out.trained = fit_linear_decoder(pairs_t);
  out.untrained = fit_linear_decoder(pairs_u);
  out.rows = pairs_t.rows();
  out.reachable = distinct_beliefs(pairs_t.beliefs);
  return out;
}

}  // namespace metapomdp::probe
