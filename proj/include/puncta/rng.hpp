#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace puncta {

namespace detail {

// One Philox4x32-10 block; multipliers 0xD2511F53 / 0xCD9E8D57 with the
// golden-ratio key schedule. Matches the published test vectors.
inline void philox4x32_10(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2, std::uint32_t c3,
                          std::uint32_t k0, std::uint32_t k1, std::uint32_t out[4]) {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = 0xD2511F53ull * c0;
        const std::uint64_t p1 = 0xCD9E8D57ull * c2;
        const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
        const std::uint32_t n1 = static_cast<std::uint32_t>(p1);
        const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
        const std::uint32_t n3 = static_cast<std::uint32_t>(p0);
        c0 = n0;
        c1 = n1;
        c2 = n2;
        c3 = n3;
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
    }
    out[0] = c0;
    out[1] = c1;
    out[2] = c2;
    out[3] = c3;
}

} // namespace detail

// Counter-based generator (Philox4x32-10, Salmon et al. constants). A (seed,
// stream) pair names an independent substream; draws depend only on how many
// values were consumed, never on global state, so every pipeline stage can be
// replayed in isolation.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) {
            fill_block();
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range, rejection-debiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t n = static_cast<std::uint64_t>(hi - lo) + 1;
        if (n == 0) return static_cast<std::int64_t>(next_u64()); // full 64-bit range
        const std::uint64_t limit = (UINT64_MAX / n) * n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return lo + static_cast<std::int64_t>(v % n);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, second value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    void fill_block() {
        detail::philox4x32_10(static_cast<std::uint32_t>(counter_),
                              static_cast<std::uint32_t>(counter_ >> 32), stream_lo_, stream_hi_,
                              key0_, key1_, buf_);
        ++counter_;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t counter_ = 0;
    std::uint32_t buf_[4] = {};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Substream naming: purpose tag in the top bits, element index below.
enum class StreamId : std::uint16_t {
    texture = 1,
    synth = 2,
    seg_init = 3,
    seg_train = 4,
    rf_init = 5,
    rf_train = 6,
    refine = 7,
    misc = 15,
};

inline constexpr std::uint64_t make_stream(StreamId purpose, std::uint64_t index = 0) {
    return (static_cast<std::uint64_t>(purpose) << 48) | (index & 0xFFFFFFFFFFFFull);
}

} // namespace puncta
