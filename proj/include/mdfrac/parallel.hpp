#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mdfrac {

/// Worker count used by assembly loops (default: hardware concurrency).
int thread_count();
void set_thread_count(int n);

/// Runs body(chunk, begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Chunk boundaries depend only on n and the worker count. The first
/// exception thrown by any worker is rethrown.
template <class Body>
void parallel_chunks(long n, int workers, Body&& body) {
    workers = std::max(1, std::min<int>(workers, static_cast<int>(std::max(1L, n / 64))));
    if (workers == 1) {
        body(0, 0L, n);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        const long begin = n * w / workers, end = n * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
            try {
                body(w, begin, end);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace mdfrac
