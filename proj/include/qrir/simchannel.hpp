#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qrir/bits.hpp"
#include "qrir/math.hpp"
#include "qrir/rng.hpp"

namespace qrir {

// Decoy-state BB84 setup; defaults follow a three-intensity industrial
// configuration.
struct ChannelParams {
    double mu = 0.30;       // signal mean photon number
    double nu1 = 0.09;      // weak decoy
    double nu2 = 0.003;     // vacuum-like decoy
    double p_mu = 0.50;     // state probabilities
    double p_nu1 = 0.25;
    double p_nu2 = 0.25;
    double eta = 0.13;      // detector efficiency
    double p_dc = 1e-6;     // dark count probability per gate
    double tau_dead_us = 5.0;  // detector dead time; affects throughput only
    double p_opt = 0.02;    // optical misalignment error probability
    double loss_db = 0.0;   // channel attenuation

    void validate() const {
        for (double p : {p_mu, p_nu1, p_nu2, eta, p_dc, p_opt})
            if (!(p >= 0.0 && p <= 1.0))
                throw std::invalid_argument("channel: probability outside [0,1]");
        if (std::abs(p_mu + p_nu1 + p_nu2 - 1.0) > 1e-9)
            throw std::invalid_argument("channel: state probabilities must sum to 1");
        if (!(mu > nu1 && nu1 > nu2))
            throw std::invalid_argument("channel: intensities must satisfy mu > nu1 > nu2");
    }
};

struct IntensityStats {
    double qber = 0.0;
    double gain = 0.0;  // detection probability per pulse
};

struct ModelQber {
    IntensityStats sig, decoy1, decoy2;
};

// Simple asymptotic decoy model: a pulse of intensity lambda is detected
// unless neither a photon arrives (Poisson thinning by the line+detector
// transmittance) nor a dark count fires; photon clicks err with p_opt, dark
// clicks are random.
inline ModelQber model_qber(const ChannelParams& cp) {
    cp.validate();
    const double t = cp.eta * std::pow(10.0, -cp.loss_db / 10.0);
    auto stats = [&](double lambda) {
        IntensityStats st;
        const double p_photon = 1.0 - std::exp(-t * lambda);
        const double p_none = (1.0 - cp.p_dc) * (1.0 - p_photon);
        st.gain = 1.0 - p_none;
        const double err = cp.p_opt * p_photon + 0.5 * cp.p_dc * (1.0 - p_photon);
        st.qber = st.gain > 0.0 ? err / st.gain : 0.0;
        return st;
    };
    return {stats(cp.mu), stats(cp.nu1), stats(cp.nu2)};
}

struct Burst {
    std::uint32_t frame_begin = 0;  // inclusive
    std::uint32_t frame_end = 0;    // exclusive
    double qber = 0.0;
};

// Per-frame effective QBER: an explicit base (or the channel model), with
// burst segments overriding specific frame ranges.
struct QberProfile {
    std::optional<double> base_qber;  // nullopt: use model_qber(params).sig
    std::vector<Burst> bursts;

    void validate() const {
        if (base_qber && !(*base_qber > 0.0 && *base_qber < 0.5))
            throw std::invalid_argument("profile: base qber outside (0, 0.5)");
        for (const auto& b : bursts) {
            if (b.frame_end <= b.frame_begin)
                throw std::invalid_argument("profile: empty burst range");
            if (!(b.qber > 0.0 && b.qber < 0.5))
                throw std::invalid_argument("profile: burst qber outside (0, 0.5)");
        }
    }
};

inline double effective_signal_qber(const QberProfile& profile, const ChannelParams& params,
                                    std::uint32_t frame_index) {
    for (const auto& b : profile.bursts)
        if (frame_index >= b.frame_begin && frame_index < b.frame_end) return b.qber;
    if (profile.base_qber) return *profile.base_qber;
    return model_qber(params).sig.qber;
}

// Weak-decoy QBER tracks the signal QBER through the model's E_nu1/E_mu
// ratio (explicit bases scale by the same ratio).
inline double decoy_signal_ratio(const ChannelParams& params) {
    auto m = model_qber(params);
    if (m.sig.qber <= 0.0) return 1.0;
    return m.decoy1.qber / m.sig.qber;
}

inline double effective_decoy_qber(const QberProfile& profile, const ChannelParams& params,
                                   std::uint32_t frame_index) {
    const double q = effective_signal_qber(profile, params, frame_index) *
                     decoy_signal_ratio(params);
    return std::clamp(q, 1e-6, 0.499);
}

struct KeyPair {
    Bits alice;
    Bits bob;
    double true_qber = 0.0;
};

inline KeyPair flip_pair(std::uint32_t length, double qber, PrivateRng& rng) {
    KeyPair kp;
    kp.alice.resize(length);
    kp.bob.resize(length);
    std::size_t flips = 0;
    for (std::uint32_t i = 0; i < length; ++i) {
        kp.alice[i] = rng.next_bit();
        bool flip = rng.next_unit() < qber;
        kp.bob[i] = kp.alice[i] ^ static_cast<std::uint8_t>(flip);
        flips += flip;
    }
    kp.true_qber = static_cast<double>(flips) / length;
    return kp;
}

// Correlated sifted-key subblock for one frame (binary symmetric channel at
// the profile's effective QBER).
inline KeyPair generate_pair(const QberProfile& profile, const ChannelParams& params,
                             std::uint32_t frame_index, std::uint32_t length,
                             std::uint64_t seed) {
    if (length == 0) throw std::invalid_argument("generate_pair: empty length");
    profile.validate();
    PrivateRng rng(derive_seed(seed, 0x700000000ull + frame_index));
    return flip_pair(length, effective_signal_qber(profile, params, frame_index), rng);
}

// Decoy strings for one block: frames_per_block segments of bits_per_frame,
// each flipped at that frame's weak-decoy QBER.
struct DecoyStream {
    Bits alice;
    Bits bob;
    std::vector<double> true_qbers;  // realized, per frame
};

inline DecoyStream generate_decoy_stream(const QberProfile& profile, const ChannelParams& params,
                                         std::uint32_t first_frame_index,
                                         std::uint32_t frames_per_block,
                                         std::uint32_t bits_per_frame, std::uint64_t seed) {
    if (bits_per_frame == 0) throw std::invalid_argument("generate_decoy_stream: empty length");
    DecoyStream ds;
    ds.alice.reserve(static_cast<std::size_t>(frames_per_block) * bits_per_frame);
    ds.bob.reserve(ds.alice.capacity());
    PrivateRng rng(derive_seed(seed, 0xdec07000ull + first_frame_index));
    for (std::uint32_t f = 0; f < frames_per_block; ++f) {
        double q = effective_decoy_qber(profile, params, first_frame_index + f);
        auto kp = flip_pair(bits_per_frame, q, rng);
        ds.alice.insert(ds.alice.end(), kp.alice.begin(), kp.alice.end());
        ds.bob.insert(ds.bob.end(), kp.bob.begin(), kp.bob.end());
        ds.true_qbers.push_back(kp.true_qber);
    }
    return ds;
}

// ============================================================================
// Recorded key dumps ("QKEY"): u32 bit length, packed Alice bits, packed Bob
// bits.  Lets the replay command run reconciliation over hardware data.
// ============================================================================

inline constexpr char kKeyDumpMagic[4] = {'Q', 'K', 'E', 'Y'};

inline void write_keydump(const std::filesystem::path& path, const Bits& alice, const Bits& bob) {
    if (alice.size() != bob.size())
        throw std::invalid_argument("keydump: alice/bob length mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write key dump: " + path.string());
    out.write(kKeyDumpMagic, 4);
    std::uint32_t n = static_cast<std::uint32_t>(alice.size());
    char lenb[4];
    for (int i = 0; i < 4; ++i) lenb[i] = static_cast<char>(n >> (8 * i));
    out.write(lenb, 4);
    auto pa = pack_bits(alice), pb = pack_bits(bob);
    out.write(reinterpret_cast<const char*>(pa.data()), static_cast<std::streamsize>(pa.size()));
    out.write(reinterpret_cast<const char*>(pb.data()), static_cast<std::streamsize>(pb.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::pair<Bits, Bits> read_keydump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open key dump: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || !std::equal(magic, magic + 4, kKeyDumpMagic))
        throw std::runtime_error("not a key dump file: " + path.string());
    char lenb[4];
    in.read(lenb, 4);
    if (!in) throw std::runtime_error("key dump truncated: " + path.string());
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i)
        n |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(lenb[i])) << (8 * i);
    std::size_t nbytes = (n + 7) / 8;
    std::vector<std::uint8_t> pa(nbytes), pb(nbytes);
    in.read(reinterpret_cast<char*>(pa.data()), static_cast<std::streamsize>(nbytes));
    in.read(reinterpret_cast<char*>(pb.data()), static_cast<std::streamsize>(nbytes));
    if (!in) throw std::runtime_error("key dump truncated: " + path.string());
    return {unpack_bits(pa, n), unpack_bits(pb, n)};
}

}  // namespace qrir
