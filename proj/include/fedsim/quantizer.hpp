#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

enum class QuantizerMode { stochastic, identity };

struct QuantizerSpec {
    std::uint32_t s = 1;  // quantization levels (excluding zero)
    QuantizerMode mode = QuantizerMode::stochastic;

    /// Maps a b-bit-per-coordinate budget to s = 2^(b-1) levels plus one
    /// sign bit per coordinate.
    static QuantizerSpec from_bits(int b);
};

/// Encoded message: l2 norm header, one sign bit and one level index per
/// coordinate. Identity mode carries the raw values instead.
struct QuantizedVector {
    double norm = 0.0;
    std::vector<std::int8_t> signs;       // +1 / -1
    std::vector<std::uint32_t> levels;    // in [0, s]
    std::uint32_t s = 1;
    std::int64_t payload_bits = 0;
    double variance_factor = 0.0;         // q = min(d/s^2, sqrt(d)/s); 0 for identity
    QuantizerMode mode = QuantizerMode::stochastic;
    ParamVector identity_values;          // only for identity mode

    std::size_t dim() const {
        return mode == QuantizerMode::identity ? identity_values.size() : levels.size();
    }
};

struct PayloadBits {
    std::int64_t exact = 0;
    double nominal = 0.0;  // 2.8*d + 32, the s = sqrt(d) estimate
};

/// Relative variance bound of the stochastic operator for dimension d.
double variance_factor(std::size_t d, const QuantizerSpec& spec);

QuantizedVector quantize(const ParamVector& v, const QuantizerSpec& spec, RngStream& rng);

ParamVector decode(const QuantizedVector& qv);

/// Exact bit count of the wire format below, plus the nominal estimate.
PayloadBits payload_bits(std::int64_t d, const QuantizerSpec& spec);

/// (32*d*K1) / ((2.8*d + 32)*K2): total-bit ratio of full-precision rounds
/// K1 vs quantized rounds K2.
double comm_cost_ratio(std::int64_t d, double k1_rounds, double k2_rounds);

/// Wire format, bit-exact: [norm: 32-bit float LE] [d sign bits]
/// [d level fields of ceil(log2(s+1)) bits], MSB-first within bytes,
/// padded to a byte boundary. A zero norm carries no sign/level payload.
/// Identity mode serializes coordinates as 32-bit floats.
std::vector<std::uint8_t> serialize(const QuantizedVector& qv);

/// Bits needed per level index: ceil(log2(s+1)).
int level_bits(std::uint32_t s);

}  // namespace fedsim
