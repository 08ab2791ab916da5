#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace shelab {

//! SplitMix64 finalizer, used to derive independent seeds from a base seed.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

//! Seed for stream `index` derived from `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept
{
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

/*!
 * Philox4x32-10 counter-based generator.
 *
 * Maps a 128-bit counter and a 64-bit key to 128 random bits. There is no
 * sequential state, so any counter can be evaluated independently.
 */
class Philox4x32
{
  public:
    using Counter = std::array<std::uint32_t, 4>;

    explicit constexpr Philox4x32(std::uint64_t key) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)}
    {
    }

    constexpr Counter operator()(Counter ctr) const noexcept
    {
        std::uint32_t k0 = key_[0];
        std::uint32_t k1 = key_[1];
        for (int round = 0; round < 10; ++round) {
            std::uint64_t const p0 = std::uint64_t{kMulA} * ctr[0];
            std::uint64_t const p1 = std::uint64_t{kMulB} * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0,
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1,
                   static_cast<std::uint32_t>(p0)};
            k0 += kWeylA;
            k1 += kWeylB;
        }
        return ctr;
    }

  private:
    static constexpr std::uint32_t kMulA = 0xD2511F53u;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

    std::array<std::uint32_t, 2> key_;
};

//! Uniform double in the open interval (0, 1) from 64 random bits.
inline double to_open_unit(std::uint64_t bits) noexcept
{
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/*!
 * Standard Gaussian pair keyed by (seed, a, b).
 *
 * Box-Muller on the two 64-bit halves of one Philox block.
 */
inline std::array<double, 2> keyed_gaussian_pair(std::uint64_t seed, std::int64_t a,
                                                 std::int64_t b) noexcept
{
    auto const ua = static_cast<std::uint64_t>(a);
    auto const ub = static_cast<std::uint64_t>(b);
    auto const out = Philox4x32{seed}({static_cast<std::uint32_t>(ua),
                                       static_cast<std::uint32_t>(ua >> 32),
                                       static_cast<std::uint32_t>(ub),
                                       static_cast<std::uint32_t>(ub >> 32)});
    double const u1 = to_open_unit((std::uint64_t{out[0]} << 32) | out[1]);
    double const u2 = to_open_unit((std::uint64_t{out[2]} << 32) | out[3]);
    double const radius = std::sqrt(-2.0 * std::log(u1));
    double const angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

/*!
 * Sequential stream built on the keyed generator.
 *
 * Used for per-path and per-replica draws; stream (seed, id) is independent
 * of every other id.
 */
class KeyedStream
{
  public:
    KeyedStream(std::uint64_t seed, std::uint64_t id) noexcept : gen_(seed), id_(id) {}

    double uniform() noexcept
    {
        if (cached_ == 0) {
            auto const ctr_lo = static_cast<std::uint32_t>(counter_);
            auto const ctr_hi = static_cast<std::uint32_t>(counter_ >> 32);
            block_ = gen_({ctr_lo, ctr_hi, static_cast<std::uint32_t>(id_),
                           static_cast<std::uint32_t>(id_ >> 32)});
            ++counter_;
            cached_ = 2;
        }
        --cached_;
        std::size_t const hi = cached_ == 1 ? 0 : 2;
        return to_open_unit((std::uint64_t{block_[hi]} << 32) | block_[hi + 1]);
    }

    double gaussian() noexcept
    {
        double const u1 = uniform();
        double const u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    Philox4x32 gen_;
    std::uint64_t id_;
    std::uint64_t counter_ = 0;
    Philox4x32::Counter block_{};
    int cached_ = 0;
};

}  // namespace shelab
