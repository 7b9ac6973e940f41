#pragma once

#include <cmath>
#include <cstdint>

namespace climfp {

// Counter-based random stream. Each stream is a pure function of
// (seed, replicate, role, counter), so replicates can run on any thread
// and still draw identical values.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t replicate = 0,
                          std::uint64_t role = 0)
        : key_(mix(mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^ replicate) ^ rotl(role, 17))) {}

    // Uniform on (0, 1), never exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller, pair cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t next() { return mix(key_ + counter_++ * 0x9E3779B97F4A7C15ULL); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace climfp
