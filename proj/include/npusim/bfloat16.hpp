#pragma once

#include <cstdint>
#include <cstring>

namespace npusim {

// bfloat16: 1 sign bit, 8 exponent bits, 7 explicit mantissa bits; stored as
// the high half of the IEEE-754 binary32 bit pattern. Widening to float is
// exact; narrowing rounds to nearest, ties to even.
struct bf16 {
    std::uint16_t bits = 0;

    friend bool operator==(bf16 a, bf16 b) { return a.bits == b.bits; }
};

inline std::uint32_t f32_bits(float x) {
    std::uint32_t u;
    std::memcpy(&u, &x, sizeof u);
    return u;
}

inline float bits_to_f32(std::uint32_t u) {
    float x;
    std::memcpy(&x, &u, sizeof u);
    return x;
}

inline bf16 bf16_round(float x) {
    std::uint32_t u = f32_bits(x);
    if ((u & 0x7f800000u) == 0x7f800000u && (u & 0x007fffffu) != 0u) {
        // NaN: keep sign, force a quiet mantissa bit so the payload survives truncation.
        return bf16{static_cast<std::uint16_t>((u >> 16) | 0x0040u)};
    }
    u += 0x7fffu + ((u >> 16) & 1u);
    return bf16{static_cast<std::uint16_t>(u >> 16)};
}

inline float bf16_to_f32(bf16 v) {
    return bits_to_f32(static_cast<std::uint32_t>(v.bits) << 16);
}

// Round-trip through bf16: the value every kernel input passes through.
inline float bf16_squash(float x) { return bf16_to_f32(bf16_round(x)); }

} // namespace npusim
