#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace charmem::detail {

// Runs fn(i) for i in [0, n) on up to `workers` threads. fn must not throw.
// Stops handing out indices once stop() returns true.
template <class Fn, class Stop>
void parallel_for(std::size_t n, int workers, Fn&& fn, Stop&& stop) {
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (;;) {
      if (stop()) return;
      std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    loop();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
}

template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  parallel_for(n, workers, std::forward<Fn>(fn), [] { return false; });
}

}  // namespace charmem::detail
