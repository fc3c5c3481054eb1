#pragma once

#include <cstddef>
#include <functional>

namespace xct {

// Worker count for data-parallel loops. Resolution order:
// set_thread_count() > XCT_THREADS env > hardware_concurrency (capped at 8).
int thread_count();
void set_thread_count(int n);

// Runs fn(i) for i in [0, n). Work is split by index; callers must only
// use it where iterations write disjoint outputs, so results do not depend
// on the worker count. Runs inline when n == 1 or one worker is configured.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

} // namespace xct
