#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace contramod {

/// Resolves a requested job count; 0 means "all hardware threads".
inline unsigned resolve_jobs(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for every i in [0, n). Work items must write to disjoint
/// outputs; merging is left to the caller so reduction order stays fixed.
/// The first exception thrown by any item is rethrown on the caller thread.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(resolve_jobs(jobs), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace contramod
