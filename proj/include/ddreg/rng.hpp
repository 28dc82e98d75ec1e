#pragma once

#include <cstdint>

namespace ddreg {

// Counter-based splittable generator: the stream for a given (seed, index,
// stream) key is a pure function of the key, independent of thread
// scheduling and platform. SplitMix64 core; uniform doubles use the top 53
// bits. std::uniform_real_distribution is implementation-defined, so draws
// are derived manually.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed + GOLDEN)) {}

    // Derives the generator for one sample of one stream.
    static Rng keyed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0) {
        std::uint64_t s = mix(seed + GOLDEN);
        s = mix(s ^ (index + GOLDEN));
        s = mix(s ^ (stream + 0x9E3779B97F4A7C15ULL * 3));
        return Rng(FromState{}, s);
    }

    std::uint64_t next_u64() {
        state_ += GOLDEN;
        return mix(state_);
    }

    double uniform01() {  // [0, 1)
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform in the closed ball of the given radius (rejection from cube).
    void uniform_in_ball(double radius, double out[3]) {
        if (radius <= 0) {
            out[0] = out[1] = out[2] = 0;
            return;
        }
        for (;;) {
            double x = uniform(-radius, radius);
            double y = uniform(-radius, radius);
            double z = uniform(-radius, radius);
            if (x * x + y * y + z * z <= radius * radius) {
                out[0] = x; out[1] = y; out[2] = z;
                return;
            }
        }
    }

private:
    struct FromState {};
    Rng(FromState, std::uint64_t s) : state_(s) {}

    static constexpr std::uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace ddreg
