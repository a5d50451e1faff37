#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "metapomdp/envs.hpp"
#include "metapomdp/errors.hpp"
#include "metapomdp/pomdp.hpp"
#include "support/filter_oracle.hpp"

#include <cmath>
#include <vector>

using namespace metapomdp;
using namespace metapomdp::testing;


TEST_CASE("sample_task is uniform and deterministic") {
  const TaskSet ts = envs::make_bandit();
  Rng rng(7);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sample_task(rng, ts) == 0;
  CHECK(std::abs(zeros / 10000.0 - 0.5) <= 0.02);

  TaskSet single = ts;
  single.tasks.resize(1);
  for (int i = 0; i < 100; ++i) CHECK(sample_task(rng, single) == 0);

  Rng a(123), b(123);
  for (int i = 0; i < 50; ++i) CHECK(sample_task(a, ts) == sample_task(b, ts));

  TaskSet empty;
  CHECK_THROWS_AS(sample_task(rng, empty), UsageError);
}

TEST_CASE("step_trial follows the K-episode reset structure") {
  const TaskSet ts = envs::make_bandit();
  Rng rng(1);
  TrialState st = start_trial(ts, 0, rng);
  st.episode_index = 8;
  StepResult r = step_trial(ts, st, 1, rng);
  CHECK(r.episode_done);
  CHECK_FALSE(r.trial_done);
  CHECK(r.next.episode_index == 9);
  CHECK(r.next.env_state == 0);

  r = step_trial(ts, r.next, 0, rng);
  CHECK(r.trial_done);
  CHECK(r.reward == 1.0);
  CHECK_THROWS_AS(step_trial(ts, r.next, 0, rng), UsageError);
  CHECK_THROWS_AS(step_trial(ts, st, 2, rng), UsageError);
}

TEST_CASE("corridor goal entry pays +10 and ends the episode") {
  const TaskSet ts = envs::make_corridor();
  Rng rng(2);
  TrialState st = start_trial(ts, 0, rng);
  st.env_state = 1;
  const StepResult r = step_trial(ts, st, envs::kLeft, rng);
  CHECK(r.reward == 10.0);
  CHECK(r.episode_done);
  CHECK_FALSE(r.capped);
  CHECK(r.reached_state == 0);
  CHECK(r.next.env_state == 5);
  CHECK(r.next.episode_index == 1);
}

TEST_CASE("belief_update examples") {
  const TaskSet bandit = envs::make_bandit();
  const Belief prior = Belief::uniform(2);
  Belief b = belief_update(prior, Evidence{0, 0, 1, 0, 1.0}, bandit);
  CHECK(b.probs(0) == 1.0);
  CHECK(b.probs(1) == 0.0);
  b = belief_update(prior, Evidence{0, 0, 1, 0, 0.0}, bandit);
  CHECK(b.probs(0) == 0.0);
  CHECK(b.probs(1) == 1.0);

  // Stepping onto the left end without reward rules out the left-goal task.
  const TaskSet corridor = envs::make_corridor();
  b = belief_update(prior, Evidence{1, envs::kLeft, 0, 0, 0.0}, corridor);
  CHECK(b.probs(0) == 0.0);
  CHECK(b.probs(1) == 1.0);
}

TEST_CASE("impossible evidence is an error, not a renormalisation") {
  const TaskSet bandit = envs::make_bandit();
  const Belief certain0 = Belief::certain(2, 0);
  CHECK_THROWS_AS(belief_update(certain0, Evidence{0, 1, 1, 0, 1.0}, bandit), InconsistentEvidence);
  CHECK_THROWS_AS(belief_update(Belief::uniform(2), Evidence{0, 0, 1, 0, 0.5}, bandit), InconsistentEvidence);
}

TEST_CASE("filter equals brute-force posterior on all histories of length <= 3") {
  for (const FilterCheck& c : check_filter_on_short_histories()) {
    CAPTURE(c.name);
    CHECK(c.histories == 28);
    CHECK(c.max_error <= 1e-9);
  }
}

TEST_CASE("belief invariants hold along random rollouts") {
  for (const TaskSet& ts : {envs::make_bandit(), envs::make_corridor(), envs::make_corridor(7, 2, 20, 3)}) {
    Rng rng(99);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
      TrialState st = start_trial(ts, sample_task(rng, ts), rng);
      const int task = st.task_id;
      Belief b = Belief::uniform(2);
      int episode_ends = 0;
      while (!st.trial_done) {
        const int a = coin(rng);
        const StepResult r = step_trial(ts, st, a, rng);
        CHECK(r.next.task_id == task);
        const Eigen::VectorXd before = b.probs;
        b = belief_update(b, Evidence{r.state_before, a, r.reached_state, r.reached_observation, r.reward}, ts);
        if (r.episode_done && !r.trial_done) b = belief_reset_update(b, r.next.env_state, ts);
        CHECK(std::abs(b.probs.sum() - 1.0) <= 1e-12);
        CHECK(b.probs.minCoeff() >= 0.0);
        CHECK(b.probs(task) > 0.0);
        for (int j = 0; j < 2; ++j) {
          if (before(j) == 0.0) CHECK(b.probs(j) == 0.0);
        }
        if (r.episode_done) {
          ++episode_ends;
          if (!r.trial_done) {
            CHECK(r.next.step_in_episode == 0);
            CHECK(r.next.episode_index == episode_ends);
          }
        }
        st = r.next;
      }
      CHECK(episode_ends == ts.episodes_per_trial);
    }
  }
}

TEST_CASE("Bayes-optimal and known-task oracle values") {
  const TaskSet bandit = envs::make_bandit();
  const OracleValue bayes = bayes_optimal_return(bandit);
  CHECK(bayes.expected_return == doctest::Approx(9.5).epsilon(1e-12));
  CHECK(known_task_optimum(bandit).mean.expected_return == doctest::Approx(10.0).epsilon(1e-12));

  const TaskSet corridor = envs::make_corridor();
  const OracleValue c = bayes_optimal_return(corridor);
  CHECK(c.expected_timesteps == doctest::Approx(15.0).epsilon(1e-12));
  CHECK(c.expected_return == doctest::Approx(20.0).epsilon(1e-12));
  const KnownTaskOptimum known = known_task_optimum(corridor);
  CHECK(known.mean.expected_timesteps == doctest::Approx(10.0).epsilon(1e-12));
  for (const OracleValue& v : known.per_task) CHECK(v.expected_timesteps == doctest::Approx(10.0));
}

TEST_CASE("oracle degenerate cases") {
  TaskSet single = envs::make_bandit();
  single.tasks.resize(1);
  CHECK(bayes_optimal_return(single).expected_return == doctest::Approx(10.0));

  const TaskSet one_episode = envs::make_bandit(1);
  CHECK(known_task_optimum(one_episode).mean.expected_return == doctest::Approx(1.0));
  CHECK(bayes_optimal_return(one_episode).expected_return == doctest::Approx(0.5));
}

TEST_CASE("planner refuses oversized searches") {
  CHECK_THROWS_AS(bayes_optimal_return(envs::make_corridor(), 10), SearchSpaceError);
}
