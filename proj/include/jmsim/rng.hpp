#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace jmsim {

/// Philox4x32-10 block function (Salmon et al., SC'11).  Pure: the output
/// depends only on (counter, key), which is what makes per-trajectory
/// streams addressable without any shared generator state.
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                key[0] += kW0;
                key[1] += kW1;
            }
            ctr = round(ctr, key);
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kM0 = 0xD2511F53u;
    static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kW0 = 0x9E3779B9u;
    static constexpr std::uint32_t kW1 = 0xBB67AE85u;

    static Counter round(const Counter& c, const Key& k) {
        const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
};

/// What a stream is used for.  Distinct purposes never share draws, so the
/// number of draws consumed by one part of a trajectory cannot shift the
/// draws seen by another (needed for common random numbers).
enum class StreamPurpose : std::uint32_t {
    initial = 0,  // initial state, random effects
    round = 1,    // inverse-transform uniforms, one index per jump round
    drift = 2,    // conditional drift draws, one index per grid step
    data = 3,     // anything else a caller wants to address
};

/// Counter-based generator addressed by (seed, trajectory, purpose, index).
/// Satisfies UniformRandomBitGenerator.
class StreamRng {
public:
    using result_type = std::uint32_t;

    StreamRng(std::uint64_t seed, std::uint64_t trajectory, StreamPurpose purpose,
              std::uint32_t index = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          ctr_{0u, index, static_cast<std::uint32_t>(purpose) | (static_cast<std::uint32_t>(trajectory >> 32) << 8),
               static_cast<std::uint32_t>(trajectory)} {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (pos_ == 4) {
            buf_ = Philox4x32::block(ctr_, key_);
            ++ctr_[0];
            pos_ = 0;
        }
        return buf_[pos_++];
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform() {
        const std::uint64_t a = (*this)() >> 5;
        const std::uint64_t b = (*this)() >> 6;
        const double x = static_cast<double>((a << 26) | b);
        return (x + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    Philox4x32::Key key_;
    Philox4x32::Counter ctr_;
    Philox4x32::Counter buf_{};
    int pos_ = 4;
};

/// SplitMix64 finalizer, used to derive child seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
    return mix64(mix64(master) ^ mix64(tag + 0x632BE59BD9B4E019ull));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t tag2) {
    return derive_seed(derive_seed(master, tag), tag2);
}

}  // namespace jmsim
