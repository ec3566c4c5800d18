#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace wchj {

// Static range split. Callers must write results into disjoint slots indexed
// by the loop variable, so the outcome is identical for any thread count.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& run_range) {
  if (n == 0) return;
  if (threads <= 1) {
    run_range(0, n);
    return;
  }
  std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::size_t chunk = (n + k - 1) / k;
  std::vector<std::thread> pool;
  pool.reserve(k);
  for (std::size_t t = 0; t < k; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &run_range] { run_range(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace wchj
