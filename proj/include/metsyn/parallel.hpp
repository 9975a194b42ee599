#pragma once

#include <cstddef>
#include <functional>

namespace metsyn {

/// Caps worker threads used by the library; 1 gives the reference serial schedule.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs fn(i) for i in [0, n) on up to max_threads() workers.
///
/// Callers write results into per-index slots and reduce them afterwards in
/// index order, so outputs never depend on the thread count. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

} // namespace metsyn
