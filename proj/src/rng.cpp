#include "spamdet/rng.hpp"

#include <cmath>
#include <numbers>

#include "spamdet/hash.hpp"

namespace spamdet {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::substream(std::uint64_t seed, std::string_view name) {
    Fnv1a64 h;
    h.update(name);
    return Rng(splitmix64(seed ^ splitmix64(h.digest())));
}

std::uint64_t Rng::index(std::uint64_t n) {
    if (n <= 1) return 0;
    // Largest multiple of n representable; reject draws above it.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace spamdet
