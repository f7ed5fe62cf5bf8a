#pragma once

// Counter-based generator: Philox4x64 with 10 rounds (Salmon et al., SC'11).
// Output for (counter, key) equals numpy's Philox bit generator after it increments
// its counter, so streams can be reproduced from Python.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace starisac::rng {

using Counter = std::array<std::uint64_t, 4>;
using Key = std::array<std::uint64_t, 2>;

inline Counter philox4x64_10(Counter c, Key k) {
    constexpr std::uint64_t m0 = 0xD2E7470EE14C6C93ULL, m1 = 0xCA5A826395121157ULL;
    constexpr std::uint64_t w0 = 0x9E3779B97F4A7C15ULL, w1 = 0xBB67AE8584CAA73BULL;
    for (int round = 0; round < 10; ++round) {
        const unsigned __int128 p0 = static_cast<unsigned __int128>(m0) * c[0];
        const unsigned __int128 p1 = static_cast<unsigned __int128>(m1) * c[2];
        const auto hi0 = static_cast<std::uint64_t>(p0 >> 64), lo0 = static_cast<std::uint64_t>(p0);
        const auto hi1 = static_cast<std::uint64_t>(p1 >> 64), lo1 = static_cast<std::uint64_t>(p1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += w0;
        k[1] += w1;
    }
    return c;
}

// (0, 1]
inline double to_unit_open_left(std::uint64_t x) { return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53; }
// [0, 1)
inline double to_unit(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

// Keyed by a 64-bit seed and a stream salt; every draw is addressed by its own counter,
// so values do not depend on the order or number of other draws.
class Philox {
  public:
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) : key_{seed, stream} {}

    Counter block(const Counter &c) const { return philox4x64_10(c, key_); }

    // circularly-symmetric complex Gaussian, unit variance (Box-Muller on one block)
    std::complex<double> cnormal(const Counter &c) const {
        const Counter r = block(c);
        const double u1 = to_unit_open_left(r[0]);
        const double u2 = to_unit(r[1]);
        const double rad = std::sqrt(-std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        return {rad * std::cos(ang), rad * std::sin(ang)};
    }

    double uniform(const Counter &c, int lane = 0) const { return to_unit(block(c)[lane & 3]); }

  private:
    Key key_;
};

} // namespace starisac::rng
