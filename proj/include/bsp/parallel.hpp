#pragma once

// Deterministic task-parallel map/reduce. Tasks are indexed 0..n-1, each
// produces an accumulator, and accumulators are merged strictly in task-index
// order, so the result depends only on the task decomposition and never on
// the number of workers or on scheduling.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace bsp {

/// Execution settings shared by the Monte Carlo drivers.
struct RunSettings {
  std::uint64_t seed = 1;
  unsigned workers = 1;
  /// Trees (or paths) per task. Part of the result's identity: changing it
  /// changes the random streams.
  std::size_t block = 4096;
};

template <typename Acc, typename TaskFn, typename MergeFn>
Acc run_tasks(std::size_t n_tasks, unsigned workers, TaskFn&& task, MergeFn&& merge, Acc init) {
  std::vector<std::optional<Acc>> results(n_tasks);
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_tasks, 1))));

  if (workers == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) results[i].emplace(task(i));
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n_tasks) return;
          try {
            results[i].emplace(task(i));
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next.store(n_tasks);
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  Acc acc = std::move(init);
  for (auto& r : results) merge(acc, std::move(*r));
  return acc;
}

/// Number of fixed-size blocks covering n items.
constexpr std::size_t block_count(std::size_t n, std::size_t block) { return (n + block - 1) / block; }

}  // namespace bsp
