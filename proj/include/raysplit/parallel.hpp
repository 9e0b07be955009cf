#pragma once

// Deterministic sample-parallel loop: each index writes only its own slot and
// reductions happen afterwards in index order, so the thread count never
// changes any output byte.

#include <thread>
#include <vector>

namespace raysplit {

template <typename Fn>
inline void parallel_for(std::size_t n, int threads, const Fn& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nw = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) {
    pool.emplace_back([&, w]() {
      for (std::size_t i = w; i < n; i += nw) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace raysplit
