#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace cxrnet {

inline int hardware_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("CXRNET_THREADS")) {
      const int v = std::atoi(env);
      if (v > 0) return v;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }();
  return n;
}

/// Runs body(begin, end) over a fixed contiguous partition of [0, n).
/// Every index is owned by exactly one invocation and the partition depends
/// only on n, so results do not depend on thread scheduling.
template <typename Body>
void parallel_for(std::int64_t n, const Body& body, std::int64_t grain = 1) {
  if (n <= 0) return;
  const int want = static_cast<int>(std::min<std::int64_t>(hardware_threads(), (n + grain - 1) / grain));
  if (want <= 1) {
    body(std::int64_t{0}, n);
    return;
  }
  const std::int64_t chunk = (n + want - 1) / want;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(want - 1));
  for (int t = 1; t < want; ++t) {
    const std::int64_t begin = t * chunk;
    const std::int64_t end = std::min<std::int64_t>(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(std::int64_t{0}, std::min<std::int64_t>(n, chunk));
  for (auto& w : workers) w.join();
}

}  // namespace cxrnet
