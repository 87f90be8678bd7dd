#pragma once

#include <exception>
#include <thread>
#include <vector>

namespace c2f {

// Worker cap: explicit request, else COARSE2FINE_THREADS, else the hardware
// count. 0 means auto.
int thread_budget(int requested = 0);

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results are identical for every worker count. The first exception thrown by
// any index is rethrown after all workers join.
template <typename Fn>
void parallel_for_index(int n, int n_threads, Fn&& fn) {
  if (n_threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int used = std::min(n_threads, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(used));
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(used));
  for (int t = 0; t < used; ++t) {
    workers.emplace_back([&fn, &errors, t, n, used] {
      try {
        for (int i = t; i < n; i += used) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace c2f
