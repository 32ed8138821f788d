// SPDX-License-Identifier: MIT
#pragma once

#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace expertpde {

/// Worker-count resolution: explicit request wins, then the
/// EXPERTPDE_WORKERS environment variable, then hardware concurrency.
inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("EXPERTPDE_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<int>(v);
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Runs fn(begin, end, chunk) over a fixed partition of [0, n) into
/// `workers` contiguous chunks. Chunk boundaries depend only on
/// (n, workers), and all writes are confined to a chunk's own range, so
/// results are independent of scheduling. Serial when workers <= 1.
template <class Fn>
void parallel_ranges(std::uint64_t n, int workers, Fn&& fn) {
    if (n == 0) return;
    if (workers <= 1) {
        fn(std::uint64_t{0}, n, 0);
        return;
    }
    const std::uint64_t w = static_cast<std::uint64_t>(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::mutex error_mtx;
    std::exception_ptr error;
    for (std::uint64_t c = 0; c < w; ++c) {
        const std::uint64_t b = n * c / w;
        const std::uint64_t e = n * (c + 1) / w;
        if (b == e) continue;
        threads.emplace_back([&fn, b, e, c, &error, &error_mtx] {
            try {
                fn(b, e, static_cast<int>(c));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mtx);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

/// Max-reduction over chunked ranges; the merge is order-independent and
/// propagates NaN.
template <class Fn>
double parallel_max(std::uint64_t n, int workers, Fn&& fn) {
    if (n == 0) return 0.0;
    if (workers <= 1) return fn(std::uint64_t{0}, n);
    std::vector<double> partial(workers, -std::numeric_limits<double>::infinity());
    parallel_ranges(n, workers, [&](std::uint64_t b, std::uint64_t e, int chunk) {
        partial[chunk] = fn(b, e);
    });
    double r = -std::numeric_limits<double>::infinity();
    for (double v : partial)
        if (!(v <= r)) r = v;
    return r;
}

}  // namespace expertpde
