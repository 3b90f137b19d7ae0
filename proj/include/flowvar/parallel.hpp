#pragma once

#include <cstdint>

namespace flowvar {

// Worker count used by the OpenMP kernels. Resolution order: value set via
// set_thread_count (CLI --threads), else FLOWVAR_THREADS, else hardware.
int thread_count();
void set_thread_count(int n);

namespace detail {
void run_parallel(std::int64_t n, void* ctx, void (*fn)(void*, std::int64_t));
}

// Runs fn(i) for i in [0, n). Every kernel built on this writes results into
// caller-owned per-index slots and reduces serially afterwards, so outputs do
// not depend on the thread count.
template <typename F>
void parallel_for(std::int64_t n, F&& fn) {
  detail::run_parallel(n, &fn, [](void* ctx, std::int64_t i) {
    (*static_cast<F*>(ctx))(i);
  });
}

}  // namespace flowvar
