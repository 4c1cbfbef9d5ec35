#include "fedsim/quantizer.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace fedsim {

QuantizerSpec QuantizerSpec::from_bits(int b) {
    if (b < 1 || b > 30) throw std::invalid_argument("bits per coordinate must be in [1, 30]");
    QuantizerSpec spec;
    spec.s = 1u << (b - 1);
    spec.mode = QuantizerMode::stochastic;
    return spec;
}

int level_bits(std::uint32_t s) {
    int b = 0;
    std::uint32_t v = s;  // need to represent values 0..s
    while (v > 0) {
        ++b;
        v >>= 1;
    }
    return b;
}

double variance_factor(std::size_t d, const QuantizerSpec& spec) {
    if (spec.mode == QuantizerMode::identity) return 0.0;
    const double dd = static_cast<double>(d);
    const double s = static_cast<double>(spec.s);
    return std::min(dd / (s * s), std::sqrt(dd) / s);
}

QuantizedVector quantize(const ParamVector& v, const QuantizerSpec& spec, RngStream& rng) {
    if (!all_finite(v)) throw std::invalid_argument("quantize: non-finite input");
    if (spec.s < 1) throw std::invalid_argument("quantize: s must be >= 1");

    QuantizedVector qv;
    qv.s = spec.s;
    qv.mode = spec.mode;

    if (spec.mode == QuantizerMode::identity) {
        qv.identity_values = v;
        qv.norm = norm(v);
        qv.payload_bits = 32 * static_cast<std::int64_t>(v.size());
        qv.variance_factor = 0.0;
        return qv;
    }

    const std::size_t d = v.size();
    qv.norm = norm(v);
    qv.variance_factor = variance_factor(d, spec);
    qv.signs.assign(d, 1);
    qv.levels.assign(d, 0);

    if (qv.norm == 0.0) {
        qv.payload_bits = 32;  // norm header only
        return qv;
    }

    const double s = static_cast<double>(spec.s);
    for (std::size_t i = 0; i < d; ++i) {
        qv.signs[i] = v[i] < 0.0 ? -1 : 1;
        const double u = std::abs(v[i]) / qv.norm * s;
        std::uint32_t level = static_cast<std::uint32_t>(std::min(std::floor(u), s));
        const double p = u - static_cast<double>(level);
        if (p > 0.0 && rng.uniform() < p) ++level;
        qv.levels[i] = level;
    }
    qv.payload_bits = payload_bits(static_cast<std::int64_t>(d), spec).exact;
    return qv;
}

ParamVector decode(const QuantizedVector& qv) {
    if (qv.mode == QuantizerMode::identity) return qv.identity_values;
    const std::size_t d = qv.levels.size();
    ParamVector out(d, 0.0);
    const double scale = qv.norm / static_cast<double>(qv.s);
    for (std::size_t i = 0; i < d; ++i) {
        if (qv.levels[i] > qv.s) throw std::out_of_range("decode: level index out of range");
        out[i] = scale * static_cast<double>(qv.signs[i]) * static_cast<double>(qv.levels[i]);
    }
    return out;
}

PayloadBits payload_bits(std::int64_t d, const QuantizerSpec& spec) {
    if (d < 1) throw std::invalid_argument("payload_bits: d must be >= 1");
    PayloadBits pb;
    pb.nominal = 2.8 * static_cast<double>(d) + 32.0;
    if (spec.mode == QuantizerMode::identity) {
        pb.exact = 32 * d;
    } else {
        pb.exact = 32 + d * (1 + level_bits(spec.s));
    }
    return pb;
}

double comm_cost_ratio(std::int64_t d, double k1_rounds, double k2_rounds) {
    if (d < 1 || k1_rounds <= 0.0 || k2_rounds <= 0.0)
        throw std::invalid_argument("comm_cost_ratio: inputs must be positive");
    const double dd = static_cast<double>(d);
    return (32.0 * dd * k1_rounds) / ((2.8 * dd + 32.0) * k2_rounds);
}

namespace {

class BitWriter {
  public:
    void put(std::uint32_t value, int bits) {
        for (int b = bits - 1; b >= 0; --b) push_bit((value >> b) & 1u);
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    void push_bit(std::uint32_t bit) {
        if (bit_pos_ == 0) bytes_.push_back(0);
        bytes_.back() |= static_cast<std::uint8_t>(bit << (7 - bit_pos_));
        bit_pos_ = (bit_pos_ + 1) % 8;
    }
    std::vector<std::uint8_t> bytes_;
    int bit_pos_ = 0;
};

void put_f32_le(std::vector<std::uint8_t>& out, float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

}  // namespace

std::vector<std::uint8_t> serialize(const QuantizedVector& qv) {
    std::vector<std::uint8_t> out;
    if (qv.mode == QuantizerMode::identity) {
        out.reserve(4 * qv.identity_values.size());
        for (double x : qv.identity_values) put_f32_le(out, static_cast<float>(x));
        return out;
    }
    put_f32_le(out, static_cast<float>(qv.norm));
    if (qv.norm == 0.0) return out;
    BitWriter bw;
    for (std::int8_t sgn : qv.signs) bw.put(sgn < 0 ? 1u : 0u, 1);
    const int lb = level_bits(qv.s);
    for (std::uint32_t level : qv.levels) bw.put(level, lb);
    auto payload = bw.take();
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

}  // namespace fedsim
