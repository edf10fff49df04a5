#pragma once

#include <cstddef>
#include <functional>

namespace relboltz {

// Worker cap from RELBOLTZ_THREADS (unset or invalid: all hardware threads).
int worker_count();

// Runs body(i) for i in [0, n) across workers. The first exception thrown by any
// iteration is rethrown on the calling thread after the loop drains.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace relboltz
