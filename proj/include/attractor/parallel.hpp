// Minimal data-parallel loop. Work items write to disjoint outputs, so results
// never depend on the worker count.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace attractor {

/// Caps the number of worker threads (0 restores the hardware default).
void set_max_jobs(unsigned jobs);
unsigned max_jobs();

namespace detail {
// Set inside workers so nested loops run inline instead of spawning threads.
inline thread_local bool in_worker = false;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned jobs = static_cast<unsigned>(std::min<std::size_t>(max_jobs(), n));
  if (jobs <= 1 || detail::in_worker) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    detail::in_worker = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace attractor
