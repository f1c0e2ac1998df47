#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "qrir/bits.hpp"

namespace qrir {

// Stateless 64-bit mixer, used to derive independent sub-seeds from a
// session seed (seed, stream-id) -> seed'.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream + 0x517cc1b727220a95ull));
}

// Deterministic generator both parties run in lockstep from a shared seed.
// All derived quantities (bounded draws, shuffles) are implemented here
// rather than with std distributions, so sequences are identical across
// standard library implementations.
class SyncRng {
  public:
    explicit SyncRng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, bound) by rejection; bound > 0.
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t limit = ~0ull - (~0ull % bound);
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % bound;
    }

    std::uint8_t next_bit() { return static_cast<std::uint8_t>(eng_() >> 63); }

    double next_unit() {  // [0,1) with 53 bits
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    Bits bits(std::size_t n) {
        Bits out(n);
        for (auto& b : out) b = next_bit();
        return out;
    }

    // Fisher-Yates; identical results everywhere, unlike std::shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::uint32_t> permutation(std::uint32_t n) {
        std::vector<std::uint32_t> p(n);
        for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

  private:
    std::mt19937_64 eng_;
};

// Source for values that must be unpredictable to the peer (punctured-bit
// fill-in).  xoshiro256** keeps it self-contained and reseedable for
// reproducible simulations; a hardware entropy source could be dropped in
// behind the same interface.
class PrivateRng {
  public:
    explicit PrivateRng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : s_) s = mix64(x += 0x9e3779b97f4a7c15ull);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    std::uint8_t next_bit() { return static_cast<std::uint8_t>(next_u64() >> 63); }

    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    Bits bits(std::size_t n) {
        Bits out(n);
        for (auto& b : out) b = next_bit();
        return out;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

}  // namespace qrir
