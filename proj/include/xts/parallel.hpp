#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace xts {

/// Worker count after applying the XTS_THREADS cap; requested <= 0 means
/// "use the hardware".
int effective_workers(int requested);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks are handed
/// out through an atomic counter; the first exception is rethrown on the
/// caller's thread after all workers join.
inline void parallel_for(std::int64_t n, int workers,
                         const std::function<void(std::int64_t)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int count = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> threads;
  threads.reserve(count);
  for (int w = 0; w < count; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::int64_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace xts
