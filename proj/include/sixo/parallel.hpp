#pragma once

#include <cstddef>
#include <functional>

namespace sixo {

// Worker count: SIXO_THREADS when set to a positive integer, otherwise the
// hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is handled by exactly one worker, so
// results written to slot i are independent of the thread count. The first
// exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace sixo
