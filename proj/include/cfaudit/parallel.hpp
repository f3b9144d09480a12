#pragma once

#include <cstddef>
#include <functional>

namespace cfaudit {

// Worker cap used by parallel_for. 0 restores the default (hardware threads).
void set_num_threads(std::size_t n);
std::size_t num_threads();

// Runs body(i) for i in [0, n). Work items are claimed dynamically, so body
// must write only to per-index outputs; results are then independent of the
// thread count and schedule. The first exception thrown by any body is
// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cfaudit
