#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace masa {

// PCG32 (O'Neill's pcg32_random_r). Chosen for portability: output is a pure
// function of the 64-bit state, identical on every platform, and streams are
// cheap to derive. All randomness in the project flows through this type.
class Pcg32 {
public:
    explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0x14057b7ef767814fULL)
        : state_(0), inc_((stream << 1u) | 1u) {
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller, one value per call. The sibling value is discarded so the
    // generator state never depends on how results are consumed.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(next_double() * n) % n;
    }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic sub-stream derivation: fold a path of tags into the base
// seed. Distinct paths give statistically independent streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t x = base;
    std::uint64_t h = splitmix64(x);
    for (std::uint64_t p : path) {
        x = h ^ (p + 0x9e3779b97f4a7c15ULL);
        h = splitmix64(x);
    }
    return h;
}

// Tags for derive_seed paths, so call sites cannot collide by accident.
namespace seed_tag {
constexpr std::uint64_t init = 1;
constexpr std::uint64_t shuffle = 2;
constexpr std::uint64_t dropout = 3;
constexpr std::uint64_t fold = 4;
constexpr std::uint64_t trial = 5;
constexpr std::uint64_t split = 6;
constexpr std::uint64_t probe = 7;
constexpr std::uint64_t stage2 = 8;
}  // namespace seed_tag

}  // namespace masa
