#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace bai {

// Worker count: explicit request, else BAI_THREADS, else the hardware.
inline int resolve_worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("BAI_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Dynamic work-sharing loop over [0, n): workers pull the next index from a
// shared counter. Output must be written into per-index slots so results are
// independent of scheduling.
inline void parallel_for_index(std::int64_t n, int workers,
                               const std::function<void(std::int64_t)>& body) {
  workers = resolve_worker_count(workers);
  if (workers <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  auto run = [&]() {
    while (true) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n || failed.load(std::memory_order_relaxed)) return;
      try {
        body(i);
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(std::min<std::int64_t>(workers, n));
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bai
