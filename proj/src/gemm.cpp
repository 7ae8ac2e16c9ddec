#include "dfkd/gemm.hpp"

#include <cstring>

#include "dfkd/threading.hpp"

namespace dfkd {

namespace {

// Fixed 8-lane split accumulation: lanes are combined in a fixed order, so a
// dot product has one well-defined result independent of threading while
// still vectorizing without reassociation.
inline float dot_lanes(const float* a, const float* b, std::int64_t k) {
    float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::int64_t i = 0;
    for (; i + 8 <= k; i += 8) {
        for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    }
    float tail = 0.0f;
    for (; i < k; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
           ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

}  // namespace

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, static_cast<std::size_t>(m * n) * sizeof(float));
    const std::int64_t blocks = (m + 3) / 4;
    parallel_for(0, blocks, [&](std::int64_t blk) {
        const std::int64_t i0 = blk * 4;
        const std::int64_t i1 = (i0 + 4 < m) ? i0 + 4 : m;
        if (i1 - i0 == 4) {
            float* c0 = c + (i0 + 0) * n;
            float* c1 = c + (i0 + 1) * n;
            float* c2 = c + (i0 + 2) * n;
            float* c3 = c + (i0 + 3) * n;
            for (std::int64_t kk = 0; kk < k; ++kk) {
                const float a0 = a[(i0 + 0) * k + kk];
                const float a1 = a[(i0 + 1) * k + kk];
                const float a2 = a[(i0 + 2) * k + kk];
                const float a3 = a[(i0 + 3) * k + kk];
                const float* br = b + kk * n;
                for (std::int64_t j = 0; j < n; ++j) {
                    const float bv = br[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        } else {
            for (std::int64_t i = i0; i < i1; ++i) {
                float* cr = c + i * n;
                for (std::int64_t kk = 0; kk < k; ++kk) {
                    const float av = a[i * k + kk];
                    const float* br = b + kk * n;
                    for (std::int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
                }
            }
        }
    });
}

void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate) {
    parallel_for(0, m, [&](std::int64_t i) {
        const float* ar = a + i * k;
        float* cr = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const float d = dot_lanes(ar, b + j * k, k);
            cr[j] = accumulate ? cr[j] + d : d;
        }
    });
}

void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
             const float* b, float* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, static_cast<std::size_t>(k * n) * sizeof(float));
    parallel_for(0, k, [&](std::int64_t kk) {
        float* cr = c + kk * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const float av = a[i * k + kk];
            const float* br = b + i * n;
            for (std::int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    });
}

}  // namespace dfkd
