#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace sdn {

/// Worker count for `requested` (0 = hardware concurrency).
inline int resolve_threads(int requested)
{
    if (requested > 0) return requested;
    return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Callers write results
/// into per-index slots, so output does not depend on scheduling. The exception
/// of the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn)
{
    const int workers = std::min(resolve_threads(threads), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace sdn
