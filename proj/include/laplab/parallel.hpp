#ifndef LAPLAB_PARALLEL_HPP
#define LAPLAB_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace laplab {

// Worker count from LAPLAB_THREADS (0 or unset = hardware concurrency).
std::size_t thread_count();

// Runs fn(i) for i in [0, count). Each index is handled by exactly one
// worker, so results written per index do not depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace laplab

#endif  // LAPLAB_PARALLEL_HPP
