#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace couplab {

// Number of workers for a request of `threads` (0 = hardware concurrency).
inline std::size_t worker_count(std::size_t threads, std::size_t tasks) {
  std::size_t n = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  return std::max<std::size_t>(1, std::min(n, tasks));
}

// Calls body(i) for i in [0, count) on up to `threads` workers. Tasks are
// claimed dynamically; callers write to per-index slots so results do not
// depend on scheduling. The first exception thrown stops further claims and
// is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t count, std::size_t threads, Body&& body) {
  if (count == 0) return;
  const std::size_t workers = worker_count(threads, count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace couplab
