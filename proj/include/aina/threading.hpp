#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace aina {

// Worker count: --threads / AINA_THREADS / hardware. Results never depend on
// it; it only controls how fixed-size work chunks are interleaved.
inline int& thread_count_ref() {
  static int count = [] {
    if (const char* env = std::getenv("AINA_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return count;
}

inline int thread_count() { return thread_count_ref(); }
inline void set_thread_count(int n) { thread_count_ref() = n > 0 ? n : 1; }

// Runs fn(chunk_index) for chunk_index in [0, chunks). Chunk contents and the
// caller's reduction order are fixed, so the outcome is identical for any
// worker count.
inline void parallel_chunks(int chunks, const std::function<void(int)>& fn) {
  const int workers = std::min(thread_count(), chunks);
  if (workers <= 1) {
    for (int c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int c = w; c < chunks; c += workers) fn(c);
    });
  for (auto& t : pool) t.join();
}

}  // namespace aina
