#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

// Counter-based (Philox 4x32-10) random streams keyed by
// (master_seed, round, client, purpose). Identical keys replay the same
// sequence regardless of what other streams did in between, which is what
// makes parallel client execution deterministic.

namespace fedsim {

enum class StreamPurpose : std::uint32_t {
    batch = 0x42415443u,      // "BATC"
    quantizer = 0x5155414Eu,  // "QUAN"
    sampling = 0x53414D50u,   // "SAMP"
    init = 0x494E4954u,       // "INIT"
};

struct StreamKey {
    std::uint64_t master_seed = 0;
    std::uint32_t round = 0;
    std::uint32_t client = 0;
    StreamPurpose purpose = StreamPurpose::init;
};

class RngStream {
  public:
    explicit RngStream(const StreamKey& key)
        : key0_(static_cast<std::uint32_t>(key.master_seed)),
          key1_(static_cast<std::uint32_t>(key.master_seed >> 32)),
          ctr1_(key.round),
          ctr2_(key.client),
          ctr3_(static_cast<std::uint32_t>(key.purpose)) {}

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal (Box-Muller; second draw cached).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
    std::uint64_t uniform_int(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("uniform_int: bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % bound;
    }

    /// r distinct indices from [0, n), uniform over r-subsets, ascending order.
    std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t r) {
        if (r > n) throw std::invalid_argument("sample_without_replacement: r > n");
        std::vector<std::uint32_t> pool(n);
        for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
        for (std::uint32_t i = 0; i < r; ++i) {
            std::uint32_t j = i + static_cast<std::uint32_t>(uniform_int(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(r);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

  private:
    static void philox_round(std::uint32_t& c0, std::uint32_t& c1, std::uint32_t& c2,
                             std::uint32_t& c3, std::uint32_t k0, std::uint32_t k1) {
        const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
        const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        c0 = hi1 ^ c1 ^ k0;
        c1 = lo1;
        c2 = hi0 ^ c3 ^ k1;
        c3 = lo0;
    }

    void refill() {
        std::uint32_t c0 = block_, c1 = ctr1_, c2 = ctr2_, c3 = ctr3_;
        std::uint32_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            philox_round(c0, c1, c2, c3, k0, k1);
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_[0] = c0;
        buf_[1] = c1;
        buf_[2] = c2;
        buf_[3] = c3;
        buf_pos_ = 0;
        ++block_;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t ctr1_, ctr2_, ctr3_;
    std::uint32_t block_ = 0;
    std::uint32_t buf_[4] = {};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

inline RngStream stream(const StreamKey& key) { return RngStream(key); }

}  // namespace fedsim
