#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace relpred {

inline std::size_t resolve_threads(int requested) {
  if (requested > 0) {
    return static_cast<std::size_t>(requested);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Static contiguous chunking: chunk c covers [c*len/n, (c+1)*len/n). Chunk
// boundaries depend only on (count, threads), so any reduction done in chunk
// order is reproducible for a fixed thread count.
template <class Fn>
void parallel_chunks(std::size_t count, std::size_t threads, Fn&& fn) {
  if (count == 0) {
    return;
  }
  if (threads > count) {
    threads = count;
  }
  if (threads <= 1) {
    fn(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t c = 0; c < threads; ++c) {
    const std::size_t begin = c * count / threads;
    const std::size_t end = (c + 1) * count / threads;
    pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
  }
  for (auto& worker : pool) {
    worker.join();
  }
}

}  // namespace relpred
