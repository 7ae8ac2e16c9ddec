#include "dfkd/threading.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace dfkd {

namespace {
std::atomic<int> g_num_threads{1};
thread_local bool tl_inside_parallel = false;
}  // namespace

void set_num_threads(int n) { g_num_threads.store(std::max(1, n)); }

int num_threads() { return g_num_threads.load(); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
    const std::int64_t count = end - begin;
    if (count <= 0) return;

    const int workers = tl_inside_parallel ? 1 : std::min<std::int64_t>(num_threads(), count);
    if (workers <= 1) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
        return;
    }

    const std::int64_t chunk = (count + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = begin + w * chunk;
        const std::int64_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn]() {
            tl_inside_parallel = true;
            for (std::int64_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace dfkd
