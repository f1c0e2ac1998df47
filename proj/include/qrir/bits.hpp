#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrir {

// Bit strings are stored unpacked, one byte per bit (values 0/1).
// Packed form (8 bits per byte, little-endian bit order) is used on the
// wire and in dump files.
using Bits = std::vector<std::uint8_t>;

inline Bits xor_bits(const Bits& a, const Bits& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("xor_bits: length mismatch");
    Bits out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] ^ b[i];
    return out;
}

inline std::size_t hamming_weight(const Bits& v) {
    std::size_t w = 0;
    for (auto b : v) w += b;
    return w;
}

inline std::size_t hamming_distance(const Bits& a, const Bits& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("hamming_distance: length mismatch");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

// Pack bits 8-per-byte, bit i of a byte holding position 8k+i.
inline std::vector<std::uint8_t> pack_bits(const Bits& v) {
    std::vector<std::uint8_t> out((v.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    return out;
}

inline Bits unpack_bits(const std::uint8_t* data, std::size_t n_bits) {
    Bits out(n_bits);
    for (std::size_t i = 0; i < n_bits; ++i)
        out[i] = (data[i / 8] >> (i % 8)) & 1u;
    return out;
}

inline Bits unpack_bits(const std::vector<std::uint8_t>& packed, std::size_t n_bits) {
    if (packed.size() * 8 < n_bits)
        throw std::invalid_argument("unpack_bits: buffer too short");
    return unpack_bits(packed.data(), n_bits);
}

inline std::string to_string(const Bits& v) {
    std::string s;
    s.reserve(v.size());
    for (auto b : v) s.push_back(b ? '1' : '0');
    return s;
}

}  // namespace qrir
