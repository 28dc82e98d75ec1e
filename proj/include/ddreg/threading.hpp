#pragma once

#include <cstdint>
#include <functional>

namespace ddreg {

// Worker threads used by parallel_for. Resolution order: explicit
// set_thread_count() > DDREG_THREADS env var > hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Runs fn(begin, end) over a static partition of [0, n). Callers must only
// parallelize work whose result is independent of the partition: disjoint
// writes, or reductions combined in a fixed order elsewhere. Nested calls
// run serially.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace ddreg
