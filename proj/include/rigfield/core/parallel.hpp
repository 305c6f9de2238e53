#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rigfield {

// Number of worker threads used when a caller passes 0.
inline unsigned default_thread_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Runs fn(lo, hi) on contiguous, statically partitioned sub-ranges of [begin, end).
// The partition depends only on (end - begin) and `threads`, never on timing,
// so per-range work is reproducible. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_ranges(std::size_t begin, std::size_t end, unsigned threads, Fn&& fn) {
    if (end <= begin) return;
    if (threads == 0) threads = default_thread_count();
    const std::size_t n = end - begin;
    const std::size_t workers = std::min<std::size_t>(threads, n);
    if (workers <= 1) {
        fn(begin, end);
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    auto run = [&](std::size_t w) {
        const std::size_t lo = begin + n * w / workers;
        const std::size_t hi = begin + n * (w + 1) / workers;
        try {
            fn(lo, hi);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run, w);
    run(0);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// Calls fn(i) for every index, distributing contiguous blocks across threads.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, unsigned threads, Fn&& fn) {
    parallel_ranges(begin, end, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
}

}  // namespace rigfield
