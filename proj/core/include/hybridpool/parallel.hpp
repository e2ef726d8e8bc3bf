#pragma once

#include <cstddef>
#include <functional>

namespace hybridpool {

/// Runs body(i) for i in [0, count) on up to `threads` workers (0 means
/// hardware concurrency). Each index runs exactly once; callers write
/// results into per-index slots so output never depends on scheduling. If
/// any body throws, the exception from the lowest failing index is
/// rethrown after all workers finish.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace hybridpool
