#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace ofsafe {

inline int resolve_threads(int threads) {
    if (threads > 0) return threads;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Chunked parallel loop over [0, n). Chunks are contiguous and fixed, so
// per-chunk reductions combined in chunk order stay deterministic.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& body) {
    int t = resolve_threads(threads);
    if (t <= 1 || n < 2048) {
        body(0, n);
        return;
    }
    std::size_t chunks = static_cast<std::size_t>(t);
    std::size_t chunk = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
        std::size_t lo = c * chunk;
        std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&body, lo, hi] { body(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

} // namespace ofsafe
