#pragma once

#include <cstddef>
#include <functional>

namespace sfd {

// Worker cap from SFD_THREADS (>= 1); hardware concurrency when unset.
std::size_t max_threads();

// Runs fn(0) .. fn(count-1), possibly across threads. Callers must write
// results into per-index slots; any reduction happens afterwards in index
// order, so the outcome is identical for any thread count. The first
// exception thrown by a body is rethrown on the calling thread.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace sfd
