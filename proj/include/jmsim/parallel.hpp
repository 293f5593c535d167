#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>

#include <omp.h>

namespace jmsim {

namespace detail {
inline int& worker_setting() {
    static int workers = 1;
    return workers;
}
}  // namespace detail

/// Caps the number of OpenMP threads used by every parallel loop in the
/// library.  Results never depend on this value.
inline void set_workers(int n) { detail::worker_setting() = std::max(1, n); }
inline int workers() { return detail::worker_setting(); }

/// Runs f(i) for i in [0, n).  Each index must write only its own output
/// slot.  If several iterations throw, the exception of the lowest index is
/// rethrown so the reported failure is independent of scheduling.  Nested
/// calls run serially.
template <class F>
void parallel_for(std::size_t n, F&& f) {
    const int nthreads = workers();
    if (nthreads <= 1 || n < 2 || omp_in_parallel()) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::mutex mu;
    std::size_t failed_at = std::numeric_limits<std::size_t>::max();
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1) num_threads(nthreads)
    for (long long ii = 0; ii < static_cast<long long>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        try {
            f(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (i < failed_at) {
                failed_at = i;
                failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace jmsim
