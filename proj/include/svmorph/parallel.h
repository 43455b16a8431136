#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace svmorph {

// Runs fn(begin, end) over [0, n) split into fixed-size blocks that are
// handed out to `threads` workers. Block boundaries depend only on n, so
// any computation whose writes are disjoint per element produces the same
// result for every thread count. threads <= 1 runs inline.
inline void parallel_for_blocks(std::size_t n, int threads,
                                const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    constexpr std::size_t kBlock = 4096;
    const std::size_t n_blocks = (n + kBlock - 1) / kBlock;
    if (threads <= 1 || n_blocks == 1) {
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const std::size_t lo = b * kBlock;
            fn(lo, std::min(lo + kBlock, n));
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        try {
            for (;;) {
                const std::size_t b = next.fetch_add(1);
                if (b >= n_blocks) break;
                const std::size_t lo = b * kBlock;
                fn(lo, std::min(lo + kBlock, n));
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    };
    std::vector<std::thread> pool;
    const int n_workers = std::min<int>(threads, static_cast<int>(n_blocks));
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)>& fn) {
    parallel_for_blocks(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
}

} // namespace svmorph
