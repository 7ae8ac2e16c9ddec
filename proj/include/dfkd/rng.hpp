#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace dfkd {

// Counter-free deterministic RNG (xoshiro256++ seeded via splitmix64).
// All distribution transforms are implemented here so that streams are
// bit-reproducible across compilers and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { reseed(seed); }

    // Domain-separated stream: same seed, independent purpose.
    Rng(std::uint64_t seed, std::uint64_t stream) { reseed(seed ^ (stream * 0x9e3779b97f4a7c15ull)); }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x += 0x9e3779b97f4a7c15ull;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            word = z ^ (z >> 31);
        }
        has_spare_ = false;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_float(float lo, float hi) {
        return lo + static_cast<float>(uniform()) * (hi - lo);
    }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    // Standard normal via Box-Muller (pair cached).
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = static_cast<float>(r * std::sin(theta));
        has_spare_ = true;
        return static_cast<float>(r * std::cos(theta));
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    float spare_ = 0.0f;
    bool has_spare_ = false;
};

// Stream tags for domain separation of the pipeline's independent RNG uses.
namespace rng_stream {
inline constexpr std::uint64_t kDatasetTrain = 1;
inline constexpr std::uint64_t kDatasetTest = 2;
inline constexpr std::uint64_t kModelInit = 3;
inline constexpr std::uint64_t kTeacherShuffle = 4;
inline constexpr std::uint64_t kDream = 5;
inline constexpr std::uint64_t kDistillShuffle = 6;
}  // namespace rng_stream

}  // namespace dfkd
