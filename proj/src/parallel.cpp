#include "selfevo/parallel.hpp"

#include <algorithm>

namespace selfevo {

std::vector<std::exception_ptr> parallel_for_each_index(std::size_t n, int max_parallel,
                                                        const std::function<void(std::size_t)>& fn) {
    std::vector<std::exception_ptr> errors(n);
    const int threads = std::max(1, max_parallel);
    const auto count = static_cast<long long>(n);

#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    return errors;
}

}  // namespace selfevo
