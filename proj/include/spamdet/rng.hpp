#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spamdet {

// Seeded random stream with platform-independent draws.
//
// std::mt19937_64 output is fully specified by the standard, but the
// std::*_distribution adaptors are not, so the draws below are written out.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent named substream of a root seed ("split", "shuffle", ...).
    static Rng substream(std::uint64_t seed, std::string_view name);

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t index(std::uint64_t n);

    // Standard normal via Box-Muller (one value per call, no caching).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

  private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace spamdet
