#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace ovkrff::detail {

// Runs fn(i) for i in [0, count). Work items must be independent; callers
// get determinism by writing into preallocated slots indexed by i.
template <typename Fn>
void parallel_for_index(long count, int threads, Fn&& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || count <= 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    const int workers = static_cast<int>(std::min<long>(threads, count));
    std::vector<std::exception_ptr> errors(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (long i = t; i < count; i += workers) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace ovkrff::detail
