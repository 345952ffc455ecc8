#pragma once

#include <cstddef>
#include <functional>

namespace transport {

// Worker count from TRANSPORT_SA_THREADS, else the hardware concurrency.
unsigned default_threads();

// Runs fn(i) for i in [0, count) on up to `threads` workers. The first exception
// thrown by any task is rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace transport
