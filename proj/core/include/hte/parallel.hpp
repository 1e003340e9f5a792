#pragma once

#include <cstddef>
#include <functional>

namespace hte {

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index
/// runs exactly once; callers write results into per-index slots, so the
/// output never depends on scheduling. The first exception thrown by any
/// body is rethrown after all workers have joined.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace hte
