#pragma once

#include <cstddef>
#include <functional>

namespace fblab {

/// Calls fn(i) for every i in [0, count) on up to `threads` workers.  The first
/// exception by index is rethrown after all workers finish.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// requested if positive, else FBLAB_THREADS if set to a positive integer, else 1.
int resolve_threads(int requested);

}  // namespace fblab
