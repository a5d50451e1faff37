#include "metapomdp/suite.hpp"

#include "metapomdp/outputs.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <thread>

namespace metapomdp::harness {

std::vector<RunRecord> train_suite(const ExperimentConfig& cfg, const SeedDoneFn& on_done) {
  cfg.hp.validate();
  std::vector<RunRecord> records(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex mutex;
  std::exception_ptr failure;

  const auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfg.seeds.size()) return;
      try {
        records[i] = train_run(cfg, cfg.seeds[i]);
        write_run_outputs(cfg, records[i]);
        std::lock_guard lock(mutex);
        if (on_done) on_done(records[i]);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.seeds.size();
        return;
      }
    }
  };
  const int jobs = std::clamp<int>(cfg.jobs, 1, static_cast<int>(std::max<std::size_t>(cfg.seeds.size(), 1)));
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  write_json(summary_json(cfg, records), (std::filesystem::path(suite_dir(cfg)) / "summary.json").string());
  return records;
}

}  // namespace metapomdp::harness
