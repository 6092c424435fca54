#pragma once

#include <cstddef>
#include <functional>

namespace imargin {

// Process-wide worker count used when a call passes workers = 0.
// Initialised from hardware_concurrency.
std::size_t default_workers();
void set_default_workers(std::size_t workers);

// Runs body(i) for i in [0, n). Each index must write only its own output
// slot so results do not depend on the worker count. If bodies throw, the
// exception from the smallest index is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                  std::size_t workers = 0);

}  // namespace imargin
