#include "flowvar/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace flowvar {

namespace {
std::atomic<int> g_threads{0};

int env_threads() {
  const char* v = std::getenv("FLOWVAR_THREADS");
  if (v != nullptr) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  return 0;
}
}  // namespace

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  n = env_threads();
  if (n > 0) return n;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

void set_thread_count(int n) { g_threads.store(n, std::memory_order_relaxed); }

namespace detail {

void run_parallel(std::int64_t n, void* ctx, void (*fn)(void*, std::int64_t)) {
  const int threads = thread_count();
#if defined(_OPENMP)
  if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::int64_t i = 0; i < n; ++i) {
      fn(ctx, i);
    }
    return;
  }
#endif
  (void)threads;
  for (std::int64_t i = 0; i < n; ++i) {
    fn(ctx, i);
  }
}

}  // namespace detail
}  // namespace flowvar
