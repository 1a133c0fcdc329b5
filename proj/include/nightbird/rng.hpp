#pragma once

#include <cstdint>
#include <vector>

namespace nightbird {

/// Deterministic pseudorandom generator: xoshiro256++ seeded through splitmix64.
/// The algorithm is fixed so that a given seed produces the same stream on every
/// platform; std::random distributions are never used (their output is
/// implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed);

    /// Next raw 64-bit word of the stream.
    uint64_t next_u64();

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). n must be positive.
    uint64_t uniform_index(uint64_t n);

    /// Standard normal deviate via the Box-Muller transform.
    double gaussian();
    double gaussian(double mean, double sigma);

    /// Deterministic Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_[4];
};

}  // namespace nightbird
