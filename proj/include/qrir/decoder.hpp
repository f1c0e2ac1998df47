#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qrir/bits.hpp"
#include "qrir/frame.hpp"
#include "qrir/ldpc.hpp"

namespace qrir {

inline constexpr double kLlrSaturation = 64.0;

struct LlrVector {
    std::vector<double> values;
    double saturation = kLlrSaturation;
};

// Negative LLR encodes bit 1 throughout.
inline void set_known_bit(LlrVector& llrs, std::uint32_t pos, std::uint8_t bit) {
    llrs.values.at(pos) = bit ? -llrs.saturation : llrs.saturation;
}

// Channel LLRs for one party's frame view: payload bits get the BSC
// likelihood at qber_hat, shortened bits are known (shared), punctured bits
// carry no information, and anything the peer disclosed is known exactly.
inline LlrVector init_llrs(const FrameAssembly& frame, double qber_hat,
                           double saturation = kLlrSaturation) {
    if (!(qber_hat > 0.0 && qber_hat < 0.5))
        throw std::invalid_argument("init_llrs: qber_hat outside (0, 0.5)");
    LlrVector llrs;
    llrs.saturation = saturation;
    llrs.values.assign(frame.ell_frame, 0.0);
    const double channel = std::log((1.0 - qber_hat) / qber_hat);
    for (std::uint32_t i = 0; i < frame.ell_frame; ++i) {
        if (frame.known[i]) {
            llrs.values[i] = frame.bits[i] ? -saturation : saturation;
        } else {
            switch (frame.cls[i]) {
                case PosClass::payload:
                    llrs.values[i] = frame.bits[i] ? -channel : channel;
                    break;
                case PosClass::shortened:
                    llrs.values[i] = frame.bits[i] ? -saturation : saturation;
                    break;
                case PosClass::punctured:
                    llrs.values[i] = 0.0;
                    break;
            }
        }
    }
    return llrs;
}

enum class DecodeStatus { converged, exhausted_iterations };

struct DecodeResult {
    DecodeStatus status = DecodeStatus::exhausted_iterations;
    Bits word;           // hard decision (last iteration)
    Bits error_pattern;  // word XOR initial hard decision; empty unless converged
    std::uint32_t iterations = 0;
    LlrVector final_llrs;
};

// Scaling factor for additional-round iteration `iter` (1-based): climbs
// from about 0.53 toward 1 with the configured step.
inline double minsum_scale(std::uint32_t iter, double step) {
    double f = 1.0 - std::exp2(-(static_cast<double>(iter) / step) - 1.0);
    if (f <= 0.0) f = 1e-3;
    if (f > 1.0) f = 1.0;
    return f;
}

// Min-sum belief propagation against a target syndrome, with the scaling
// factor rising per iteration.  Flooding schedule; hard decision checked
// after every iteration (and once before the first).
inline DecodeResult minsum_decode(const ParityCheckMatrix& H, const Bits& target_syndrome,
                                  const LlrVector& llrs, std::uint32_t max_iters,
                                  double scale_step = 12.5) {
    if (target_syndrome.size() != H.n_rows)
        throw std::invalid_argument("minsum_decode: syndrome length != n_rows");
    if (llrs.values.size() != H.n_cols)
        throw std::invalid_argument("minsum_decode: llr length != n_cols");
    if (max_iters < 1) throw std::invalid_argument("minsum_decode: max_iters < 1");

    const std::uint32_t n = H.n_cols, m = H.n_rows, E = H.n_edges();
    const double sat = llrs.saturation;

    std::vector<double> c2v(E, 0.0);          // row-major edge order
    std::vector<double> totals(llrs.values);  // llr + sum of c2v per column
    std::vector<double> v2c_row;              // scratch, one row at a time
    Bits hard(n);

    Bits initial_hard(n);
    for (std::uint32_t v = 0; v < n; ++v) initial_hard[v] = totals[v] < 0.0;

    DecodeResult res;
    res.final_llrs.saturation = sat;

    auto check_converged = [&]() {
        for (std::uint32_t v = 0; v < n; ++v) hard[v] = totals[v] < 0.0;
        for (std::uint32_t c = 0; c < m; ++c) {
            std::uint8_t acc = 0;
            for (std::uint32_t e = H.row_ptr[c]; e < H.row_ptr[c + 1]; ++e)
                acc ^= hard[H.row_cols[e]];
            if (acc != target_syndrome[c]) return false;
        }
        return true;
    };

    auto finish = [&](DecodeStatus status, std::uint32_t iters) {
        res.status = status;
        res.iterations = iters;
        res.word = hard;
        if (status == DecodeStatus::converged)
            res.error_pattern = xor_bits(hard, initial_hard);
        for (auto& t : totals) t = std::clamp(t, -sat, sat);
        res.final_llrs.values = std::move(totals);
        return res;
    };

    if (check_converged()) return finish(DecodeStatus::converged, 0);

    for (std::uint32_t it = 1; it <= max_iters; ++it) {
        const double scale = minsum_scale(it, scale_step);
        for (std::uint32_t c = 0; c < m; ++c) {
            const std::uint32_t begin = H.row_ptr[c], end = H.row_ptr[c + 1];
            const std::uint32_t deg = end - begin;
            v2c_row.resize(deg);
            double min1 = sat, min2 = sat;
            std::uint32_t argmin = 0;
            bool sign_all = target_syndrome[c] != 0;
            for (std::uint32_t j = 0; j < deg; ++j) {
                const double v2c = totals[H.row_cols[begin + j]] - c2v[begin + j];
                v2c_row[j] = v2c;
                const double mag = std::abs(v2c);
                if (v2c < 0.0) sign_all = !sign_all;
                if (mag < min1) {
                    min2 = min1;
                    min1 = mag;
                    argmin = j;
                } else if (mag < min2) {
                    min2 = mag;
                }
            }
            for (std::uint32_t j = 0; j < deg; ++j) {
                const double mag = (j == argmin) ? min2 : min1;
                bool neg = sign_all != (v2c_row[j] < 0.0);
                c2v[begin + j] = (neg ? -scale : scale) * mag;
            }
        }
        for (std::uint32_t v = 0; v < n; ++v) totals[v] = llrs.values[v];
        for (std::uint32_t c = 0; c < m; ++c)
            for (std::uint32_t e = H.row_ptr[c]; e < H.row_ptr[c + 1]; ++e)
                totals[H.row_cols[e]] += c2v[e];
        if (check_converged()) return finish(DecodeStatus::converged, it);
    }
    return finish(DecodeStatus::exhausted_iterations, max_iters);
}

}  // namespace qrir
