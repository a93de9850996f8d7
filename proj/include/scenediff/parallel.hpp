#pragma once

#include <cstddef>
#include <functional>

namespace scenediff {

/// Number of worker threads to use. Honors PCDF_THREADS (0 or unset means
/// hardware concurrency).
int thread_count();

/// Splits [0, n) into contiguous chunks and runs `body(begin, end)` on each.
/// Chunks never overlap, so bodies that only write to their own index range
/// produce output independent of the thread count.
void parallel_for(std::size_t n,
                  const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1024);

}  // namespace scenediff
