#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pdmp::numerics {

/// Calls body(k) for k in [0, n) on up to `threads` workers (0: hardware
/// concurrency). The first exception thrown by a body is rethrown.
template <typename Body>
void parallel_for(int n, int threads, Body&& body) {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int workers = std::clamp(threads > 0 ? threads : hw, 1, std::max(1, n));
  if (workers == 1) {
    for (int k = 0; k < n; ++k) body(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto run = [&] {
    for (int k = next++; k < n; k = next++) {
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace pdmp::numerics
