#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace spamdet {

// Incremental 64-bit FNV-1a, used for cache fingerprints.
class Fnv1a64 {
  public:
    void update(std::span<const std::byte> bytes) {
        for (std::byte b : bytes) {
            state_ ^= static_cast<std::uint64_t>(b);
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }
    template <typename T>
    void update_value(const T &v) {
        update(std::as_bytes(std::span<const T, 1>(&v, 1)));
    }

    std::uint64_t digest() const { return state_; }

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace spamdet
