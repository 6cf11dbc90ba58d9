#pragma once

#include <array>
#include <cstdint>

namespace mfcm {

/// Philox4x32-10 counter-based generator (Salmon et al. 2011).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
        const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
        const std::uint32_t hi0 = std::uint32_t(p0 >> 32), lo0 = std::uint32_t(p0);
        const std::uint32_t hi1 = std::uint32_t(p1 >> 32), lo1 = std::uint32_t(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Uniform doubles in (0, 1) for stream (seed, index), block `draw`.
inline std::array<double, 2> philox_uniform2(std::uint64_t seed, std::uint64_t index, std::uint64_t draw) {
    const auto r = philox4x32({std::uint32_t(index), std::uint32_t(index >> 32), std::uint32_t(draw),
                               std::uint32_t(draw >> 32)},
                              {std::uint32_t(seed), std::uint32_t(seed >> 32)});
    auto to_double = [](std::uint32_t a, std::uint32_t b) {
        const std::uint64_t m = (std::uint64_t(a >> 5) << 26) | (b >> 6);
        return (double(m) + 0.5) * 0x1.0p-53;
    };
    return {to_double(r[0], r[1]), to_double(r[2], r[3])};
}

} // namespace mfcm
