#pragma once

#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace railseg {

// Resolve the worker-thread count: explicit request wins, then the
// RAILSEG_THREADS environment variable, then hardware concurrency.
// RAILSEG_DETERMINISTIC=1 forces single-threaded execution.
inline int resolve_threads(int requested) {
    if (const char* det = std::getenv("RAILSEG_DETERMINISTIC"); det && det[0] == '1') return 1;
    if (requested > 0) return requested;
    if (const char* env = std::getenv("RAILSEG_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw > 16 ? 16 : hw);
}

// Run fn(begin, end, chunk) over [0, n) split into `threads` contiguous
// chunks. Chunk boundaries depend only on (n, threads), so per-chunk
// accumulation reduced in chunk order stays deterministic.
template <typename Fn>
void parallel_chunks(int64_t n, int threads, Fn&& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n < 2 * threads) {
        fn(int64_t(0), n, 0);
        return;
    }
    const int64_t chunk = (n + threads - 1) / threads;
    std::vector<std::thread> pool;
    pool.reserve(size_t(threads));
    for (int t = 0; t < threads; ++t) {
        const int64_t begin = t * chunk;
        const int64_t end = begin + chunk < n ? begin + chunk : n;
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end, t] { fn(begin, end, t); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace railseg
