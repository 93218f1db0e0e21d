#pragma once

#include <cstddef>
#include <functional>

namespace hetgp {

/// Worker count: HETGP_THREADS if set to a positive integer, otherwise the hardware
/// concurrency (at least 1).
[[nodiscard]] std::size_t worker_count();

/// Calls body(i) for i in [0, count) on up to worker_count() threads. Each index runs
/// exactly once; the first exception thrown by any body is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace hetgp
