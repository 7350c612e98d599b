#pragma once

#include <cstddef>
#include <functional>

namespace dpdl {

// Worker count for intra-run parallelism: DPDL_THREADS if set to a positive
// integer, otherwise std::thread::hardware_concurrency() (at least 1).
std::size_t thread_budget();

// Runs body(i) for i in [0, n) on up to thread_budget() threads. Each index is
// executed exactly once; callers write results into per-index slots so any
// reduction afterwards happens in index order. The first exception thrown by a
// body is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dpdl
