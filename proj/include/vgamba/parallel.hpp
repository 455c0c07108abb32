#pragma once

#include <cstdint>
#include <functional>

namespace vgamba {

// Worker cap: min(hardware, VGAMBA_THREADS if set). Always >= 1.
int max_threads();

// Force a cap for the current process (used by timing code to pin to a single
// execution stream). Pass 0 to restore the environment-derived default.
void set_thread_cap(int n);

// Splits [0,n) into contiguous chunks, one thread per chunk. Each index is
// processed by exactly one thread, so writes to disjoint per-index outputs are
// deterministic regardless of the thread count.
void parallel_for(int64_t n, const std::function<void(int64_t begin, int64_t end)>& fn);

}  // namespace vgamba
