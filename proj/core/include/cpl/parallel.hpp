#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace cpl::par {

// Caps the worker count for parallel_for. 0 restores the hardware default.
// Thread count never affects results: loop bodies write only to their own
// slots and reductions use a fixed association order.
void set_max_threads(int threads);
// Effective cap: the configured value, or the hardware thread count (at
// least 1) when unconfigured.
int max_threads();

// Runs body(i) for i in [begin, end), statically partitioned into
// contiguous blocks. body must not touch state shared across indices
// except through per-index output slots. The first exception thrown by
// any worker is rethrown on the calling thread.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

// Sum with a fixed pairwise association order, independent of thread
// count and platform. Error grows O(log n) rather than O(n), which keeps
// large-sample averages reproducible to the last bit.
double pairwise_sum(std::span<const double> values);

}  // namespace cpl::par
