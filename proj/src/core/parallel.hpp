#pragma once

#include <functional>

namespace flowseed {

// Number of worker threads used by parallel_for. Defaults to the hardware
// count, capped at 8; override with FLOWSEED_THREADS.
int thread_count();

// Runs fn(i) for i in [0, n). Work is split into contiguous per-thread
// chunks, so results are deterministic whenever distinct indices write
// disjoint outputs. Nested calls degrade to serial execution.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace flowseed
