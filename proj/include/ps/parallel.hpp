#pragma once

#include <cstdint>
#include <functional>

namespace ps {

/// Runs fn(i) for i in [0, n). Indices are statically partitioned into
/// contiguous chunks, one per worker, so the work assignment never depends
/// on scheduling. threads <= 1 runs inline; callers own any reduction and
/// must combine per-index results in index order to stay deterministic.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn);

int default_threads();

}  // namespace ps
