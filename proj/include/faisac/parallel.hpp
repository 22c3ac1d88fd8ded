#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace faisac {

// Worker count from FAISAC_WORKERS; 1 when unset or unparsable.
inline int worker_count() {
  const char* v = std::getenv("FAISAC_WORKERS");
  if (v == nullptr) return 1;
  try {
    return std::clamp(std::stoi(v), 1, 256);
  } catch (const std::exception&) {
    return 1;
  }
}

// Runs fn(k) for k in [0, count). Results must be written to per-index slots by the caller.
template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::clamp(workers, 1, std::max(1, count));
  if (workers == 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int k = next++; k < count; k = next++) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace faisac
