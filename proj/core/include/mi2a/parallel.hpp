#pragma once

#include <cstddef>
#include <functional>

namespace mi2a {

/// Worker count: MI2A_THREADS if set to a positive integer, else hardware concurrency.
std::size_t thread_count();

/// Runs fn(i) for i in [0, n) across thread_count() workers. The first exception thrown
/// by any task is rethrown on the calling thread after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Keeps large freed buffers in the heap instead of returning them to the OS. Training
/// allocates the same big activation buffers every step, and re-faulting fresh pages
/// costs roughly a third of the step time. No-op outside glibc.
void tune_allocator();

}  // namespace mi2a
