#pragma once

#include <functional>

namespace thd {

// Worker cap: THREADS_DESK_THREADS if set (>=1), else logical core count.
int worker_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, one per
// worker. Calls made from inside a worker run serially to avoid nested pools.
// Results must not depend on the partition: every index is handled exactly
// once and writes must be disjoint.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace thd
