#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace burstforge {

// Thread cap for internal kernel parallelism. Controlled by the
// BURSTFORGE_THREADS environment variable; defaults to the hardware
// concurrency. Results never depend on the cap: workers own disjoint
// output ranges.
inline int thread_cap() {
  static const int cap = [] {
    if (const char* env = std::getenv("BURSTFORGE_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return cap;
}

// Splits [0, n) into contiguous chunks, one per worker.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& body) {
  if (n <= 0) return;
  int workers = std::min<std::int64_t>(thread_cap(), n);
  if (workers <= 1) {
    body(std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    std::int64_t lo = w * chunk;
    std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  body(std::int64_t{0}, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace burstforge
