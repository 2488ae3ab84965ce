#include "mdfrac/parallel.hpp"

#include <atomic>

namespace mdfrac {

namespace {

std::atomic<int>& workers() {
    static std::atomic<int> n{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
    return n;
}

}  // namespace

int thread_count() { return workers().load(); }

void set_thread_count(int n) { workers().store(std::max(1, n)); }

}  // namespace mdfrac
