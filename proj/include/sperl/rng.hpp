#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sperl {

// Deterministic, platform-independent random streams.
//
// Experiments are reproduced bit-for-bit from a single seed, so we do not
// rely on std::<distribution> (whose output is implementation-defined).
// One root seed fans out into named substreams (env, exploration, replay,
// eval, ...) so that consumers never share state.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        // splitmix64 expansion of the seed into the xoshiro256++ state
        origin_ = seed;
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix(x);
        has_cached_normal_ = false;
        cached_normal_ = 0.0;
    }

    // Derive an independent stream from this stream's seed and a name.
    RngStream substream(std::string_view name) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ origin_;
        for (char c : name) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 0x100000001b3ULL;
        }
        return RngStream(h);
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

    // Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in {0, ..., n-1}, n >= 1.
    std::uint64_t uniform_int(std::uint64_t n) {
        // multiply-shift; bias is < n / 2^64 and irrelevant at our scales
        const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Box-Muller (pair-cached).
    double normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        cached_normal_ = radius * std::sin(angle);
        has_cached_normal_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stdev) { return mean + stdev * normal(); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4] = {};
    std::uint64_t origin_ = 0;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

} // namespace sperl
