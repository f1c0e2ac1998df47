#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qrir/adapt.hpp"
#include "qrir/bits.hpp"
#include "qrir/ldpc.hpp"
#include "qrir/rng.hpp"

namespace qrir {

// Per-frame sub-seed streams derived from the shared session seed.
namespace seed_stream {
inline constexpr std::uint64_t interleaver = 1;
inline constexpr std::uint64_t shortened = 2;
inline constexpr std::uint64_t verify_hash = 3;
inline constexpr std::uint64_t disclosure = 4;
inline constexpr std::uint64_t commitment = 5;
}  // namespace seed_stream

inline std::uint64_t frame_seed(std::uint64_t session_seed, std::uint32_t frame_id) {
    return derive_seed(session_seed, 0x66726d00ull + frame_id);
}

enum class PosClass : std::uint8_t { payload = 0, punctured = 1, shortened = 2 };

// One party's view of an EC frame: the interleaved payload subblock plus
// punctured (locally random, peer-unknown) and shortened (shared
// pseudo-random) filler positions.
//
// Disclosure is directional: `sent` marks positions whose own as-built value
// went to the peer; `known` marks positions where the peer's value arrived
// and `bits` now holds ground truth.  The asymmetric scheme uses one
// direction only; the symmetric scheme uses both on each side.
struct FrameAssembly {
    std::uint32_t ell_frame = 0;
    CodeSelection selection;
    std::vector<std::uint32_t> payload_positions;    // ascending
    std::vector<std::uint32_t> punctured_positions;  // ascending
    std::vector<std::uint32_t> shortened_positions;  // ascending
    std::vector<std::uint32_t> punctured_order;      // generation order
    std::vector<std::uint32_t> permutation;  // payload j <- subblock[permutation[j]]
    std::vector<PosClass> cls;               // size ell_frame
    Bits bits;      // current values; peer disclosures overwrite
    Bits original;  // values as built
    std::vector<std::uint8_t> sent;   // own value disclosed to peer
    std::vector<std::uint8_t> known;  // peer's value received
    // punctured first (true-random generation order), then payload in the
    // synchronized pseudo-random order; cursor tracks what was handed out
    std::vector<std::uint32_t> disclosure_sequence;
    std::size_t disclosure_cursor = 0;
    std::uint64_t seed_commitment = 0;
    std::uint64_t hash_key1 = 0, hash_key2 = 0;

    Bits payload_bits() const { return gather(payload_positions); }
    Bits punctured_bits() const { return gather(punctured_positions); }
    Bits shortened_bits() const { return gather(shortened_positions); }

    // Corrected payload back in subblock order.
    Bits deinterleave(const Bits& frame_word) const {
        if (frame_word.size() != ell_frame)
            throw std::invalid_argument("deinterleave: word length mismatch");
        Bits sub(payload_positions.size());
        for (std::size_t j = 0; j < payload_positions.size(); ++j)
            sub[permutation[j]] = frame_word[payload_positions[j]];
        return sub;
    }

    // Next d not-yet-sent positions from the schedule with this party's
    // as-built values, sorted for the wire; marks them sent.
    std::pair<std::vector<std::uint32_t>, Bits> take_disclosure(std::uint32_t d) {
        std::vector<std::uint32_t> pos;
        pos.reserve(d);
        while (pos.size() < d && disclosure_cursor < disclosure_sequence.size()) {
            std::uint32_t i = disclosure_sequence[disclosure_cursor++];
            if (!sent[i]) pos.push_back(i);
        }
        return finish_take(std::move(pos));
    }

    // Symmetric variant: disclose own values at explicit positions.
    std::pair<std::vector<std::uint32_t>, Bits> take_disclosure_at(
        std::vector<std::uint32_t> pos) {
        for (auto i : pos) {
            if (i >= ell_frame) throw std::invalid_argument("disclosure: position out of range");
            if (sent[i]) throw std::invalid_argument("disclosure: position already sent");
        }
        return finish_take(std::move(pos));
    }

    // Peer's disclosed values become ground truth at those positions.
    void apply_disclosure(const std::vector<std::uint32_t>& pos, const Bits& vals) {
        if (pos.size() != vals.size())
            throw std::invalid_argument("disclosure: positions/values length mismatch");
        for (std::size_t j = 0; j < pos.size(); ++j) {
            std::uint32_t i = pos[j];
            if (i >= ell_frame) throw std::invalid_argument("disclosure: position out of range");
            if (known[i]) throw std::invalid_argument("disclosure: position repeated");
            known[i] = 1;
            bits[i] = vals[j];
        }
    }

    std::uint32_t punctured_unsent() const {
        std::uint32_t n = 0;
        for (auto i : punctured_positions) n += !sent[i];
        return n;
    }
    std::uint32_t payload_unsent() const {
        std::uint32_t n = 0;
        for (auto i : payload_positions) n += !sent[i];
        return n;
    }

  private:
    std::pair<std::vector<std::uint32_t>, Bits> finish_take(std::vector<std::uint32_t> pos) {
        std::sort(pos.begin(), pos.end());
        Bits vals(pos.size());
        for (std::size_t j = 0; j < pos.size(); ++j) {
            sent[pos[j]] = 1;
            vals[j] = original[pos[j]];
        }
        return {std::move(pos), std::move(vals)};
    }

    Bits gather(const std::vector<std::uint32_t>& pos) const {
        Bits out(pos.size());
        for (std::size_t j = 0; j < pos.size(); ++j) out[j] = bits[pos[j]];
        return out;
    }
};

// Assembles a frame from a payload subblock.  Both parties call this with
// the same shared per-frame seed; punctured values come from the caller's
// private generator and differ between parties (Bob's are placeholders —
// his decoder starts them at zero LLR).
inline FrameAssembly build_frame(const ParityCheckMatrix& H, const Bits& subblock,
                                 const CodeSelection& sel, std::uint64_t shared_frame_seed,
                                 PrivateRng& true_random) {
    const std::uint32_t ell = H.n_cols;
    const std::uint32_t p = sel.punctured, s = sel.shortened;
    if (p > H.max_punctured())
        throw std::invalid_argument("build_frame: p exceeds untainted capacity");
    if (subblock.size() + p + s != ell)
        throw std::invalid_argument("build_frame: subblock length does not fit selection");

    FrameAssembly f;
    f.ell_frame = ell;
    f.selection = sel;
    f.cls.assign(ell, PosClass::payload);
    f.bits.assign(ell, 0);
    f.sent.assign(ell, 0);
    f.known.assign(ell, 0);

    f.punctured_order.assign(H.untainted_columns.begin(), H.untainted_columns.begin() + p);
    f.punctured_positions = f.punctured_order;
    std::sort(f.punctured_positions.begin(), f.punctured_positions.end());
    for (auto i : f.punctured_positions) f.cls[i] = PosClass::punctured;

    // shortened positions: highest free indices (deterministic, no RNG cost)
    f.shortened_positions.reserve(s);
    for (std::uint32_t i = ell; i > 0 && f.shortened_positions.size() < s;) {
        --i;
        if (f.cls[i] == PosClass::payload) {
            f.cls[i] = PosClass::shortened;
            f.shortened_positions.push_back(i);
        }
    }
    std::reverse(f.shortened_positions.begin(), f.shortened_positions.end());

    f.payload_positions.reserve(ell - p - s);
    for (std::uint32_t i = 0; i < ell; ++i)
        if (f.cls[i] == PosClass::payload) f.payload_positions.push_back(i);

    SyncRng perm_rng(derive_seed(shared_frame_seed, seed_stream::interleaver));
    f.permutation = perm_rng.permutation(static_cast<std::uint32_t>(f.payload_positions.size()));
    for (std::size_t j = 0; j < f.payload_positions.size(); ++j)
        f.bits[f.payload_positions[j]] = subblock[f.permutation[j]];

    SyncRng short_rng(derive_seed(shared_frame_seed, seed_stream::shortened));
    for (auto i : f.shortened_positions) f.bits[i] = short_rng.next_bit();

    for (auto i : f.punctured_order) f.bits[i] = true_random.next_bit();

    f.original = f.bits;

    f.disclosure_sequence = f.punctured_order;
    {
        auto payload_shuffled = f.payload_positions;
        SyncRng disc_rng(derive_seed(shared_frame_seed, seed_stream::disclosure));
        disc_rng.shuffle(payload_shuffled);
        f.disclosure_sequence.insert(f.disclosure_sequence.end(), payload_shuffled.begin(),
                                     payload_shuffled.end());
    }

    SyncRng hash_rng(derive_seed(shared_frame_seed, seed_stream::verify_hash));
    f.hash_key1 = hash_rng.next_u64();
    f.hash_key2 = hash_rng.next_u64();
    f.seed_commitment = mix64(derive_seed(shared_frame_seed, seed_stream::commitment));
    return f;
}

// 64-bit keyed polynomial hash over a bit string (packed into 64-bit words,
// evaluated mod 2^61-1).  Used for payload verification; keyed per frame.
inline std::uint64_t verify_hash(const Bits& payload, std::uint64_t key1, std::uint64_t key2) {
    constexpr std::uint64_t P = (1ull << 61) - 1;
    auto mulmod = [](std::uint64_t a, std::uint64_t b) {
        unsigned __int128 t = static_cast<unsigned __int128>(a) * b;
        std::uint64_t lo = static_cast<std::uint64_t>(t) & P;
        std::uint64_t hi = static_cast<std::uint64_t>(t >> 61);
        std::uint64_t r = lo + hi;
        if (r >= P) r -= P;
        return r;
    };
    const std::uint64_t k = key1 % P;
    std::uint64_t h = 0;
    std::uint64_t word = 0;
    int fill = 0;
    auto fold = [&](std::uint64_t w) {
        h = mulmod(h, k);
        h += w % P;
        if (h >= P) h -= P;
    };
    for (auto b : payload) {
        word |= static_cast<std::uint64_t>(b & 1u) << fill;
        if (++fill == 64) {
            fold(word);
            word = 0;
            fill = 0;
        }
    }
    if (fill > 0) fold(word | (1ull << fill));  // length-disambiguating stop bit
    return mix64(h ^ mix64(key2 ^ payload.size()));
}

inline std::uint64_t verify_hash(const FrameAssembly& f, const Bits& payload_subblock_order) {
    return verify_hash(payload_subblock_order, f.hash_key1, f.hash_key2);
}

// A-posteriori error rate over payload positions, against the as-built bits.
inline double measured_payload_qber(const FrameAssembly& f, const Bits& corrected_word) {
    if (corrected_word.size() != f.ell_frame)
        throw std::invalid_argument("measured qber: word length mismatch");
    std::size_t errs = 0;
    for (auto i : f.payload_positions) errs += corrected_word[i] != f.original[i];
    return static_cast<double>(errs) / static_cast<double>(f.payload_positions.size());
}

}  // namespace qrir
