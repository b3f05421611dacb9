#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <vector>

namespace selfevo {

/// Runs `fn(i)` for i in [0, n) on at most `max_parallel` OpenMP threads with
/// dynamic scheduling. Exceptions are captured per index and returned; a null
/// entry means the task succeeded. Callers join results by index, so output
/// never depends on completion order.
std::vector<std::exception_ptr> parallel_for_each_index(std::size_t n, int max_parallel,
                                                        const std::function<void(std::size_t)>& fn);

}  // namespace selfevo
