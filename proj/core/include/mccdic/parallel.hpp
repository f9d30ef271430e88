#pragma once

#include <cstddef>
#include <functional>

namespace mccdic {

/// Worker cap: MCCDIC_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results written to per-index slots do not depend on the thread count.
/// The first exception thrown by any task is rethrown after all workers join.
/// Nested calls from inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mccdic
