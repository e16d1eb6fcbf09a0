#pragma once

#include <cstdint>
#include <functional>

namespace vtcc {

// Worker count for internal parallel loops. Read from VTCC_THREADS on first
// use (default 1). Loops only split work over disjoint outputs, so results are
// bit-identical for every thread count.
int thread_count();
void set_thread_count(int threads);

// Keeps freed tensor buffers on the heap instead of returning them to the OS,
// which avoids page-fault churn from the many large short-lived allocations of
// a training step. No-op outside glibc.
void tune_allocator();

// Calls fn(begin, end) over contiguous chunks of [0, n).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace vtcc
