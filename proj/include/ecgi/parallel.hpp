#pragma once

#include <functional>

namespace ecgi {

// Worker count used when a caller passes threads = 0: the ECGI_THREADS
// environment variable if set, otherwise std::thread::hardware_concurrency.
int default_thread_count();

// Runs fn(i) for i in [0, n). Work is statically partitioned (worker w takes
// indices congruent to w), so any reduction done afterwards in index order is
// independent of scheduling. fn must write only to per-index slots. The first
// exception thrown by a worker is rethrown in the caller.
void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0);

}  // namespace ecgi
