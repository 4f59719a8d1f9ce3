#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace facekit {

// SplitMix64 finalizer. Used both as the seed-derivation hash and to expand
// a single u64 into generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed fan-out: child = mix(parent, tag, index). Every module derives its
// sub-seeds through this one function so any stage of a run can be replayed
// in isolation. The chain is: global seed -> module seed -> per-item seed.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag,
                                 std::uint64_t index = 0) {
    return splitmix64(parent ^ splitmix64(fnv1a64(tag) + 0x632be59bd9b4e019ULL * index));
}

// Deterministic random source. std::mt19937_64 has standard-specified output;
// the uniform/normal draws below are hand-rolled (fixed draw counts, no
// rejection) so streams are reproducible across standard libraries, which
// std::*_distribution does not guarantee.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0. Uses 64-bit multiply-shift;
    // bias is < 2^-64 per draw, negligible for the statistical contracts here.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(gen_()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (basic form: exactly two uniforms per
    // draw, no caching, so the stream position is a pure function of the
    // number of calls).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        // Guard u1 == 0; log(0) would produce -inf.
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    std::mt19937_64& engine() { return gen_; }

    std::string serialize_state() const;
    void restore_state(const std::string& text);

private:
    std::mt19937_64 gen_;
};

}  // namespace facekit
