#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace opcalc {

/// Worker count from DISENTANGLE_WORKERS, defaulting to 1.
inline int default_workers() {
    if (const char* env = std::getenv("DISENTANGLE_WORKERS")) {
        try {
            int w = std::stoi(env);
            if (w >= 1) return w;
        } catch (...) {
        }
    }
    return 1;
}

/// Splits [0, count) into fixed-size chunks, evaluates `work(begin, end)` for
/// each chunk on up to `workers` threads and returns the per-chunk results in
/// chunk order. Chunk boundaries do not depend on `workers`, so reducing the
/// returned vector in order gives bit-identical results for any worker count.
template <class Result, class Work>
std::vector<Result> map_chunks(std::size_t count, std::size_t chunk, int workers, const Work& work) {
    chunk = std::max<std::size_t>(chunk, 1);
    const std::size_t nchunks = (count + chunk - 1) / chunk;
    std::vector<std::optional<Result>> slots(nchunks);
    auto run = [&](std::size_t c) {
        const std::size_t b = c * chunk;
        slots[c].emplace(work(b, std::min(count, b + chunk)));
    };
    const int nthreads = static_cast<int>(std::min<std::size_t>(std::max(workers, 1), nchunks));
    if (nthreads <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c) run(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex mu;
        std::vector<std::thread> pool;
        pool.reserve(nthreads);
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (std::size_t c; (c = next.fetch_add(1)) < nchunks;) {
                    try {
                        run(c);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(mu);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    std::vector<Result> out;
    out.reserve(nchunks);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace opcalc
