#pragma once

#include <bit>
#include <cstdint>
#include <random>
#include <string_view>

namespace crtlab {

/// Generator used by every stochastic routine. Always passed explicitly.
using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace detail

/// Incremental 64-bit hash for deriving task seeds. Stable across platforms.
class SeedHasher {
public:
    explicit constexpr SeedHasher(std::uint64_t base) noexcept : state_(detail::splitmix64(base)) {}

    constexpr SeedHasher& mix(std::uint64_t v) noexcept {
        state_ = detail::splitmix64(state_ ^ detail::splitmix64(v));
        return *this;
    }
    SeedHasher& mix(double v) noexcept { return mix(std::bit_cast<std::uint64_t>(v)); }
    constexpr SeedHasher& mix(std::string_view s) noexcept { return mix(detail::fnv1a(s)); }

    constexpr std::uint64_t value() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace crtlab
