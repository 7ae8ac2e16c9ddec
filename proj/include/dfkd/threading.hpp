#pragma once

#include <cstdint>
#include <functional>

namespace dfkd {

// Global worker-thread cap (CLI --threads). Default 1.
void set_num_threads(int n);
int num_threads();

// Runs fn(i) for i in [begin, end). Indices are partitioned into contiguous
// chunks across workers; every index is processed by exactly one worker with
// the same per-index serial semantics, so results are bitwise independent of
// the thread count. Nested calls run serial.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

}  // namespace dfkd
