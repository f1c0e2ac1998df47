#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

#include "qrir/adapt.hpp"
#include "qrir/decoder.hpp"
#include "qrir/frame.hpp"
#include "qrir/metrics.hpp"
#include "qrir/transport.hpp"

namespace qrir {

struct SessionConfig {
    std::uint32_t ell_frame = 32000;
    std::uint32_t frames_per_block = 50;
    std::uint32_t decoy_bits_per_frame = 1024;
    EstimatorConfig estimator;
    RoundPolicy policy;
    std::uint32_t max_iters = 60;
    double scale_step = 12.5;
    double llr_saturation = kLlrSaturation;
    std::uint64_t shared_seed = 1;   // synchronized streams, both parties
    std::uint64_t private_seed = 0;  // 0: derive from shared_seed per role
    // Virtual clock costs; deterministic timing is what makes repeated runs
    // byte-identical.  Live sessions switch to wall time.
    double cost_per_iteration_ms = 0.5;
    double latency_per_message_ms = 1.0;
    bool wall_clock = false;

    std::uint32_t subblock_len() const {
        return ell_frame - alpha_budget(ell_frame, policy.alpha);
    }
    std::uint64_t role_private_seed(bool alice) const {
        std::uint64_t base = private_seed ? private_seed : derive_seed(shared_seed, 0x9f1e);
        return derive_seed(base, alice ? 0xa11c : 0xb0b0);
    }
};

// Per-frame elapsed time: virtual (decode iterations + message latencies) or
// wall, depending on configuration.
class FrameClock {
  public:
    explicit FrameClock(const SessionConfig& cfg)
        : wall_(cfg.wall_clock),
          iter_cost_(cfg.cost_per_iteration_ms),
          msg_cost_(cfg.latency_per_message_ms),
          start_(std::chrono::steady_clock::now()) {}
    void add_iterations(std::uint32_t n) { virt_ms_ += iter_cost_ * n; }
    void add_message() { virt_ms_ += msg_cost_; }
    double elapsed_ms() const {
        if (wall_) {
            auto d = std::chrono::steady_clock::now() - start_;
            return std::chrono::duration<double, std::milli>(d).count();
        }
        return virt_ms_;
    }

  private:
    bool wall_;
    double iter_cost_, msg_cost_;
    double virt_ms_ = 0.0;
    std::chrono::steady_clock::time_point start_;
};

// One party's inputs for a block: sifted subblocks plus the weak-decoy
// string; true_qbers is harness ground truth copied into the records.
struct BlockData {
    std::vector<Bits> subblocks;
    Bits decoy_bits;
    std::vector<double> true_qbers;
};

struct SessionResult {
    std::vector<FrameRecord> records;
};

// Invoked after every finished frame; lets callers stream records out while
// the session is still running (live CSVs survive a dead peer).
using RecordSink = std::function<void(const FrameRecord&)>;

// Bob's corrected payload, invoked per verified frame.  Reconciled-key output,
// and the hook harnesses use to check the payloads actually agree instead of
// trusting the verification hash.
using KeySink = std::function<void(std::uint32_t, const Bits&)>;

namespace detail {

inline RoundMessage recv_logged(Link& link, FrameClock& clock) {
    RoundMessage m = link.recv();
    clock.add_message();
    return m;
}

inline void send_logged(Link& link, FrameClock& clock, RoundMessage m) {
    link.send(m);
    clock.add_message();
}

// Peer told us to drop the frame.
struct PeerAbort {
    AbortReason reason;
};

template <class T>
T expect(RoundMessage&& m, std::uint32_t frame_id) {
    if (auto* a = std::get_if<AbortMsg>(&m)) throw PeerAbort{a->reason};
    if (frame_id_of(m) != frame_id)
        throw ProtocolError("message for frame " + std::to_string(frame_id_of(m)) +
                            " while handling frame " + std::to_string(frame_id));
    T* p = std::get_if<T>(&m);
    if (!p)
        throw ProtocolError("unexpected message type " +
                            std::to_string(static_cast<int>(msg_type_of(m))));
    return std::move(*p);
}

inline void sync_disclosure_state(DisclosureState& disc, const FrameAssembly& f) {
    disc.punctured_remaining = f.punctured_unsent();
    disc.payload_remaining = f.payload_unsent();
}

// d smallest |final LLR| positions not yet sent or pinned, ties by ascending
// index.  Shortened positions are shared knowledge and never worth sending.
inline std::vector<std::uint32_t> pick_min_llr(const LlrVector& llrs, const FrameAssembly& f,
                                               std::uint32_t d) {
    std::vector<std::uint32_t> cand;
    cand.reserve(f.ell_frame);
    for (std::uint32_t i = 0; i < f.ell_frame; ++i)
        if (!f.sent[i] && !f.known[i] && f.cls[i] != PosClass::shortened) cand.push_back(i);
    if (cand.size() > d) {
        std::nth_element(cand.begin(), cand.begin() + d, cand.end(),
                         [&](std::uint32_t a, std::uint32_t b) {
                             double ma = std::abs(llrs.values[a]), mb = std::abs(llrs.values[b]);
                             if (ma != mb) return ma < mb;
                             return a < b;
                         });
        cand.resize(d);
        std::sort(cand.begin(), cand.end());
    }
    return cand;
}

inline void validate_selection(const SessionConfig& cfg, const CodePool& pool,
                               const CodeSelection& sel) {
    const auto& entry = pool.at(sel.rate_x100);  // throws on unknown rate
    if (sel.punctured > entry.H.max_punctured())
        throw ProtocolError("selection punctures beyond untainted capacity");
    if (sel.punctured + sel.shortened != alpha_budget(cfg.ell_frame, cfg.policy.alpha))
        throw ProtocolError("selection p+s != alpha budget");
    if (!(sel.qber_hat > 0.0 && sel.qber_hat < 0.5))
        throw ProtocolError("selection qber_hat outside (0, 0.5)");
}

}  // namespace detail

// ============================================================================
// Alice: reactive side.  Answers the peer's code selection with a syndrome,
// then serves disclosures until the frame verifies or dies.
// ============================================================================

inline FrameRecord alice_run_frame(Link& link, const SessionConfig& cfg, const CodePool& pool,
                                   const Bits& subblock, std::uint32_t frame_id,
                                   PrivateRng& priv) {
    using namespace detail;
    FrameClock clock(cfg);
    FrameRecord rec;
    rec.frame_id = frame_id;
    rec.scheme = cfg.policy.scheme;
    const bool symmetric = cfg.policy.scheme == Scheme::symmetric;

    auto csel = expect<CodeSelectMsg>(recv_logged(link, clock), frame_id);
    CodeSelection sel{csel.rate_x100, csel.punctured, csel.shortened, csel.qber_hat};
    validate_selection(cfg, pool, sel);
    rec.selection = sel;

    const auto& H = pool.at(sel.rate_x100).H;
    const std::uint64_t fseed = frame_seed(cfg.shared_seed, frame_id);
    FrameAssembly f = build_frame(H, subblock, sel, fseed, priv);
    const std::uint32_t ell_syn = H.n_rows;

    send_logged(link, clock,
                SyndromeMsg{frame_id, csel.rate_x100, csel.punctured, csel.shortened,
                            f.seed_commitment, syndrome(H, f.bits)});

    DisclosureState disc;
    sync_disclosure_state(disc, f);

    // Symmetric scheme: decode the peer's word off his syndrome in parallel.
    Bits peer_syndrome;
    std::optional<DecodeResult> own;
    auto decode_peer = [&] {
        LlrVector llrs = init_llrs(f, sel.qber_hat, cfg.llr_saturation);
        own = minsum_decode(H, peer_syndrome, llrs, cfg.max_iters, cfg.scale_step);
        clock.add_iterations(own->iterations);
        rec.iterations_total += own->iterations;
    };
    if (symmetric) {
        auto syn_b = expect<SyndromeMsg>(recv_logged(link, clock), frame_id);
        if (syn_b.seed_commitment != f.seed_commitment)
            throw ProtocolError("seed commitment mismatch");
        peer_syndrome = std::move(syn_b.syndrome);
        decode_peer();
    }

    try {
        for (;;) {
            RoundMessage m = recv_logged(link, clock);
            if (auto* a = std::get_if<AbortMsg>(&m)) throw PeerAbort{a->reason};
            if (frame_id_of(m) != frame_id) throw ProtocolError("frame id mismatch");

            if (auto* vm = std::get_if<VerifyMsg>(&m)) {
                bool ok = vm->hash == verify_hash(f, subblock);
                send_logged(link, clock, VerifyResult{frame_id, ok});
                rec.success = true;
                rec.verified = ok;
                break;
            }

            if (!std::get_if<FailReport>(&m))
                throw ProtocolError("unexpected message in disclosure phase");

            if (symmetric && own->status == DecodeStatus::converged) {
                // Our decode pinned the peer's word: hand over our values
                // wherever the two words differ, and he re-decodes with a
                // nearly fully known frame.
                std::vector<std::uint32_t> pos;
                for (std::uint32_t i = 0; i < f.ell_frame; ++i)
                    if (!f.sent[i] && f.cls[i] != PosClass::shortened &&
                        own->word[i] != f.original[i])
                        pos.push_back(i);
                if (pos.empty()) {  // nothing left to offer
                    send_logged(link, clock,
                                AbortMsg{frame_id, AbortReason::disclosure_exhausted});
                    break;
                }
                auto [spos, svals] = f.take_disclosure_at(std::move(pos));
                sync_disclosure_state(disc, f);
                rec.d_total += spos.size();
                ++rec.rounds_additional;
                send_logged(link, clock,
                            DisclosureMsg{frame_id, std::move(spos), std::move(svals)});
                continue;
            }

            std::uint32_t d = next_disclosure_count(cfg.policy, disc, sel, ell_syn, cfg.ell_frame);
            if (d == 0 && !symmetric) {
                send_logged(link, clock, AbortMsg{frame_id, AbortReason::disclosure_exhausted});
                break;
            }

            if (!symmetric) {
                auto [pos, vals] = f.take_disclosure(d);
                if (pos.empty()) {
                    send_logged(link, clock,
                                AbortMsg{frame_id, AbortReason::disclosure_exhausted});
                    break;
                }
                disc.d_history.push_back(static_cast<std::uint32_t>(pos.size()));
                sync_disclosure_state(disc, f);
                rec.d_total += pos.size();
                ++rec.rounds_additional;
                send_logged(link, clock, DisclosureMsg{frame_id, std::move(pos), std::move(vals)});
                continue;
            }

            // Symmetric, both sides failed: swap minimal-|LLR| values.
            auto [pos, vals] = f.take_disclosure_at(pick_min_llr(own->final_llrs, f, d));
            if (!pos.empty()) disc.d_history.push_back(static_cast<std::uint32_t>(pos.size()));
            sync_disclosure_state(disc, f);
            rec.d_total += pos.size();
            send_logged(link, clock, SymmetricLlrMsg{frame_id, pos, vals});
            auto peer = expect<SymmetricLlrMsg>(recv_logged(link, clock), frame_id);
            f.apply_disclosure(peer.positions, peer.values);
            rec.d_total += peer.positions.size();
            ++rec.rounds_additional;
            decode_peer();
        }
    } catch (const PeerAbort&) {
        rec.success = false;
        rec.verified = false;
    }
    rec.elapsed_ms = clock.elapsed_ms();
    return rec;
}

// ============================================================================
// Bob: driving side.  Owns the estimator, selects the code, decodes, asks
// for disclosures, verifies.
// ============================================================================

inline FrameRecord bob_run_frame(Link& link, const SessionConfig& cfg, const CodePool& pool,
                                 QberEstimatorState& est, const Bits& subblock,
                                 std::uint32_t frame_id, double decoy_qber, PrivateRng& priv,
                                 const KeySink& keys = nullptr) {
    using namespace detail;
    FrameClock clock(cfg);
    FrameRecord rec;
    rec.frame_id = frame_id;
    rec.scheme = cfg.policy.scheme;
    const bool symmetric = cfg.policy.scheme == Scheme::symmetric;
    const bool blind =
        cfg.policy.scheme == Scheme::blind_fixed || cfg.policy.scheme == Scheme::blind_linear;
    const bool adaptive = !blind;

    CodeSelection sel;
    if (blind) {
        sel = select_blind(pool, cfg.policy);
    } else {
        rec.burst_flagged = detect_burst(cfg.estimator, est, decoy_qber);
        double qhat;
        if (rec.burst_flagged || est.ema) {
            qhat = a_priori_qber(cfg.estimator, est, decoy_qber);
        } else {
            qhat = std::clamp(cfg.estimator.bootstrap_qber, kQberHatMin, kQberHatMax);
        }
        sel = select_code(pool, qhat, cfg.policy);
    }
    note_decoy(est, decoy_qber);
    rec.selection = sel;

    send_logged(link, clock,
                CodeSelectMsg{frame_id, static_cast<std::uint16_t>(sel.rate_x100), sel.punctured,
                              sel.shortened, sel.qber_hat});

    const auto& H = pool.at(sel.rate_x100).H;
    const std::uint64_t fseed = frame_seed(cfg.shared_seed, frame_id);
    FrameAssembly f = build_frame(H, subblock, sel, fseed, priv);

    auto fail_feedback = [&] {
        if (adaptive)
            apply_verification_feedback(cfg.estimator, est, false, 0.0);
    };

    try {
        auto syn = expect<SyndromeMsg>(recv_logged(link, clock), frame_id);
        if (syn.rate_x100 != sel.rate_x100 || syn.punctured != sel.punctured ||
            syn.shortened != sel.shortened)
            throw ProtocolError("syndrome echo does not match selection");
        if (syn.seed_commitment != f.seed_commitment)
            throw ProtocolError("seed commitment mismatch");
        if (symmetric)
            send_logged(link, clock,
                        SyndromeMsg{frame_id, syn.rate_x100, syn.punctured, syn.shortened,
                                    f.seed_commitment, syndrome(H, f.bits)});

        const Bits& target = syn.syndrome;
        LlrVector llrs = init_llrs(f, sel.qber_hat, cfg.llr_saturation);
        DisclosureState disc;
        sync_disclosure_state(disc, f);

        for (;;) {
            DecodeResult res = minsum_decode(H, target, llrs, cfg.max_iters, cfg.scale_step);
            clock.add_iterations(res.iterations);
            rec.iterations_total += res.iterations;

            if (res.status == DecodeStatus::converged) {
                rec.success = true;
                Bits dsub = f.deinterleave(res.word);
                send_logged(link, clock, VerifyMsg{frame_id, verify_hash(f, dsub)});
                auto vr = expect<VerifyResult>(recv_logged(link, clock), frame_id);
                rec.verified = vr.ok;
                rec.measured_qber = measured_payload_qber(f, res.word);
                if (adaptive)
                    apply_verification_feedback(
                        cfg.estimator, est, vr.ok,
                        std::clamp(rec.measured_qber, kQberHatMin, 0.5));
                if (vr.ok && keys) keys(frame_id, dsub);
                break;
            }

            const bool over_budget = clock.elapsed_ms() > cfg.policy.time_budget_ms;
            const std::uint32_t cap =
                blind ? cfg.policy.n_add_max : cfg.policy.adaptive_round_cap;
            if (over_budget || rec.rounds_additional >= cap) {
                send_logged(link, clock,
                            AbortMsg{frame_id, over_budget ? AbortReason::time_budget
                                                           : AbortReason::round_limit});
                fail_feedback();
                break;
            }

            send_logged(link, clock, FailReport{frame_id, rec.rounds_additional});
            RoundMessage m = recv_logged(link, clock);
            if (auto* a = std::get_if<AbortMsg>(&m)) throw PeerAbort{a->reason};
            if (frame_id_of(m) != frame_id) throw ProtocolError("frame id mismatch");

            if (auto* dm = std::get_if<DisclosureMsg>(&m)) {
                f.apply_disclosure(dm->positions, dm->values);
                for (std::size_t j = 0; j < dm->positions.size(); ++j)
                    set_known_bit(llrs, dm->positions[j], dm->values[j]);
                rec.d_total += dm->positions.size();
                ++rec.rounds_additional;
                continue;
            }
            if (auto* sm = std::get_if<SymmetricLlrMsg>(&m)) {
                if (!symmetric) throw ProtocolError("LLR swap outside symmetric scheme");
                f.apply_disclosure(sm->positions, sm->values);
                rec.d_total += sm->positions.size();
                std::uint32_t d = next_disclosure_count(cfg.policy, disc, sel,
                                                        H.n_rows, cfg.ell_frame);
                auto [pos, vals] = f.take_disclosure_at(pick_min_llr(res.final_llrs, f, d));
                if (sm->positions.empty() && pos.empty()) {
                    // neither side has anything left to reveal
                    send_logged(link, clock,
                                AbortMsg{frame_id, AbortReason::disclosure_exhausted});
                    fail_feedback();
                    break;
                }
                if (!pos.empty()) disc.d_history.push_back(static_cast<std::uint32_t>(pos.size()));
                sync_disclosure_state(disc, f);
                rec.d_total += pos.size();
                ++rec.rounds_additional;
                send_logged(link, clock, SymmetricLlrMsg{frame_id, std::move(pos), std::move(vals)});
                llrs = init_llrs(f, sel.qber_hat, cfg.llr_saturation);
                continue;
            }
            throw ProtocolError("unexpected message in disclosure phase");
        }
    } catch (const PeerAbort&) {
        rec.success = false;
        rec.verified = false;
        fail_feedback();
    }
    rec.elapsed_ms = clock.elapsed_ms();
    return rec;
}

// ============================================================================
// Blocks and sessions
// ============================================================================

inline std::uint32_t block_frame_id(const SessionConfig& cfg, std::uint32_t block_id,
                                    std::uint32_t index_in_block) {
    return block_id * cfg.frames_per_block + index_in_block;
}

inline std::vector<FrameRecord> alice_run_block(Link& link, const SessionConfig& cfg,
                                                const CodePool& pool, const BlockData& block,
                                                std::uint32_t block_id, PrivateRng& priv,
                                                const RecordSink& sink = nullptr) {
    link.send(DecoyMsg{block_id, block.decoy_bits});
    std::vector<FrameRecord> recs;
    recs.reserve(block.subblocks.size());
    for (std::uint32_t i = 0; i < block.subblocks.size(); ++i) {
        auto rec = alice_run_frame(link, cfg, pool, block.subblocks[i],
                                   block_frame_id(cfg, block_id, i), priv);
        if (i < block.true_qbers.size()) rec.qber_true = block.true_qbers[i];
        if (sink) sink(rec);
        recs.push_back(std::move(rec));
    }
    return recs;
}

inline std::vector<FrameRecord> bob_run_block(Link& link, const SessionConfig& cfg,
                                              const CodePool& pool, QberEstimatorState& est,
                                              const BlockData& block, std::uint32_t block_id,
                                              PrivateRng& priv, const RecordSink& sink = nullptr,
                                              const KeySink& keys = nullptr) {
    RoundMessage m = link.recv();
    auto* dm = std::get_if<DecoyMsg>(&m);
    if (!dm || dm->block_id != block_id) throw ProtocolError("expected decoy exchange");
    if (dm->decoy_bits.size() != block.decoy_bits.size())
        throw ProtocolError("decoy string length mismatch");
    const std::uint32_t bpf = cfg.decoy_bits_per_frame;
    if (block.decoy_bits.size() != static_cast<std::size_t>(bpf) * block.subblocks.size())
        throw ProtocolError("decoy string does not cover the block");

    est.decoy_qbers.clear();
    std::vector<FrameRecord> recs;
    recs.reserve(block.subblocks.size());
    for (std::uint32_t i = 0; i < block.subblocks.size(); ++i) {
        std::size_t mismatch = 0;
        for (std::uint32_t j = i * bpf; j < (i + 1) * bpf; ++j)
            mismatch += dm->decoy_bits[j] != block.decoy_bits[j];
        double decoy_q = static_cast<double>(mismatch) / bpf;
        auto rec = bob_run_frame(link, cfg, pool, est, block.subblocks[i],
                                 block_frame_id(cfg, block_id, i), decoy_q, priv, keys);
        if (i < block.true_qbers.size()) rec.qber_true = block.true_qbers[i];
        if (sink) sink(rec);
        recs.push_back(std::move(rec));
    }
    return recs;
}

inline SessionResult run_alice_session(Link& link, const SessionConfig& cfg, const CodePool& pool,
                                       const std::vector<BlockData>& blocks,
                                       const RecordSink& sink = nullptr) {
    if (pool.frame_len != cfg.ell_frame)
        throw std::invalid_argument("session: pool frame length != ell_frame");
    PrivateRng priv(cfg.role_private_seed(true));
    SessionResult out;
    for (std::uint32_t b = 0; b < blocks.size(); ++b) {
        auto recs = alice_run_block(link, cfg, pool, blocks[b], b, priv, sink);
        out.records.insert(out.records.end(), recs.begin(), recs.end());
    }
    return out;
}

inline SessionResult run_bob_session(Link& link, const SessionConfig& cfg, const CodePool& pool,
                                     const std::vector<BlockData>& blocks,
                                     const RecordSink& sink = nullptr,
                                     const KeySink& keys = nullptr) {
    if (pool.frame_len != cfg.ell_frame)
        throw std::invalid_argument("session: pool frame length != ell_frame");
    PrivateRng priv(cfg.role_private_seed(false));
    QberEstimatorState est;
    SessionResult out;
    for (std::uint32_t b = 0; b < blocks.size(); ++b) {
        auto recs = bob_run_block(link, cfg, pool, est, blocks[b], b, priv, sink, keys);
        out.records.insert(out.records.end(), recs.begin(), recs.end());
    }
    return out;
}

// ============================================================================
// In-process pair drivers (tests, sweeps): Alice on a thread, Bob in the
// caller, both over an in-memory link pair.
// ============================================================================

namespace detail {
template <class AliceFn, class BobFn>
auto run_pair(AliceFn&& alice, BobFn&& bob) {
    auto [la, lb] = make_memory_link_pair();
    using AliceResult = decltype(alice(*la));
    AliceResult alice_out{};
    std::exception_ptr alice_err;
    std::thread t([&, link = la.get()] {
        try {
            alice_out = alice(*link);
        } catch (...) {
            alice_err = std::current_exception();
            link->close();
        }
    });
    decltype(bob(*lb)) bob_out{};
    std::exception_ptr bob_err;
    try {
        bob_out = bob(*lb);
    } catch (...) {
        bob_err = std::current_exception();
        lb->close();
    }
    t.join();
    if (alice_err) std::rethrow_exception(alice_err);
    if (bob_err) std::rethrow_exception(bob_err);
    return std::make_pair(std::move(alice_out), std::move(bob_out));
}
}  // namespace detail

inline std::pair<SessionResult, SessionResult> run_session_pair(
    const SessionConfig& cfg, const CodePool& pool, const std::vector<BlockData>& alice_blocks,
    const std::vector<BlockData>& bob_blocks, const KeySink& keys = nullptr) {
    return detail::run_pair(
        [&](Link& l) { return run_alice_session(l, cfg, pool, alice_blocks); },
        [&](Link& l) { return run_bob_session(l, cfg, pool, bob_blocks, nullptr, keys); });
}

// Single-frame harness: runs the full per-frame protocol over a fresh link
// pair with an externally owned estimator state.
inline std::pair<FrameRecord, FrameRecord> run_frame_pair(
    const SessionConfig& cfg, const CodePool& pool, const Bits& alice_sub, const Bits& bob_sub,
    QberEstimatorState& est, double decoy_qber, std::uint32_t frame_id = 0,
    const KeySink& keys = nullptr) {
    PrivateRng apriv(cfg.role_private_seed(true));
    PrivateRng bpriv(cfg.role_private_seed(false));
    return detail::run_pair(
        [&](Link& l) { return alice_run_frame(l, cfg, pool, alice_sub, frame_id, apriv); },
        [&](Link& l) {
            return bob_run_frame(l, cfg, pool, est, bob_sub, frame_id, decoy_qber, bpriv, keys);
        });
}

}  // namespace qrir
