#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace posekit::detail {

/// Chunked parallel loop over [0, n). The callable must write only to
/// per-index state; iteration order within a chunk is ascending, so results
/// are identical to the sequential run. threads == 0 picks the hardware
/// concurrency; threads == 1 runs inline.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads == 1 || n < 2 * threads) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace posekit::detail
