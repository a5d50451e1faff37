#pragma once

#include "metapomdp/config.hpp"
#include "metapomdp/harness.hpp"

#include <functional>
#include <vector>

namespace metapomdp::harness {

/// Called once per finished seed, serialised across workers.
using SeedDoneFn = std::function<void(const RunRecord&)>;

/// Trains every seed in cfg.seeds on up to cfg.jobs threads, writes each
/// run's outputs and then the suite summary.json. Records come back in seed
/// order. The first failure stops the remaining seeds and is rethrown.
std::vector<RunRecord> train_suite(const ExperimentConfig& cfg, const SeedDoneFn& on_done = {});

}  // namespace metapomdp::harness
