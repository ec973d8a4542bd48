#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bohmfreeze {

inline constexpr const char* workers_env_var = "BOHMFREEZE_WORKERS";

namespace detail {
inline std::atomic<std::size_t>& worker_override() {
    static std::atomic<std::size_t> value{0};
    return value;
}
}  // namespace detail

/// 0 restores the default (environment variable, then hardware concurrency).
inline void set_worker_count(std::size_t n) { detail::worker_override() = n; }

inline std::size_t worker_count() {
    if (const std::size_t o = detail::worker_override(); o > 0) return o;
    if (const char* env = std::getenv(workers_env_var)) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, n). Each index is processed exactly once and
/// callers write results by index, so output never depends on scheduling.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace bohmfreeze
