#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrir/config.hpp"
#include "qrir/metrics.hpp"
#include "qrir/session.hpp"
#include "qrir/simchannel.hpp"

namespace qrir {

// ============================================================================
// Simulated key material.  Both parties can regenerate the same data from
// (profile, params, seed), which is what lets two live processes agree on
// correlated keys without an actual quantum channel.
// ============================================================================

struct GeneratedData {
    std::vector<BlockData> alice;
    std::vector<BlockData> bob;
};

inline GeneratedData generate_session_data(const QberProfile& profile,
                                           const ChannelParams& params,
                                           const SessionConfig& cfg, std::uint32_t frames,
                                           std::uint64_t data_seed) {
    profile.validate();
    const std::uint32_t sub_len = cfg.subblock_len();
    const std::uint32_t fpb = cfg.frames_per_block;
    GeneratedData out;
    for (std::uint32_t first = 0; first < frames; first += fpb) {
        const std::uint32_t in_block = std::min(fpb, frames - first);
        BlockData a, b;
        auto decoy = generate_decoy_stream(profile, params, first, in_block,
                                           cfg.decoy_bits_per_frame, data_seed);
        a.decoy_bits = std::move(decoy.alice);
        b.decoy_bits = std::move(decoy.bob);
        for (std::uint32_t i = 0; i < in_block; ++i) {
            auto kp = generate_pair(profile, params, first + i, sub_len, data_seed);
            a.subblocks.push_back(std::move(kp.alice));
            b.subblocks.push_back(std::move(kp.bob));
            a.true_qbers.push_back(kp.true_qber);
            b.true_qbers.push_back(kp.true_qber);
        }
        out.alice.push_back(std::move(a));
        out.bob.push_back(std::move(b));
    }
    return out;
}

// ============================================================================
// Sweep experiments
// ============================================================================

struct PointResult {
    std::string label;
    Scheme scheme = Scheme::adaptive_asym;
    std::vector<FrameRecord> records;  // driving side
    BlockSummary summary;
};

// One (scheme, operating point): generate data, run both parties in-process,
// aggregate the driver's records.
inline PointResult run_point(const Config& base, const CodePool& pool, Scheme scheme,
                             const QberProfile& profile, const ChannelParams& params,
                             double nominal_qber, const std::string& label,
                             std::uint64_t point_seed) {
    Config cfg = base;
    cfg.session.policy.scheme = scheme;
    cfg.session.policy.nominal_qber = nominal_qber;
    cfg.session.shared_seed = derive_seed(point_seed, 0x5e55);
    auto data = generate_session_data(profile, params, cfg.session,
                                      cfg.sweep.frames_per_point,
                                      derive_seed(point_seed, 0xda7a));
    // A verified frame whose payload differs from the reference key is a
    // protocol bug, not a statistic; fail the whole point.
    const std::uint32_t fpb = cfg.session.frames_per_block;
    std::uint32_t mismatched = 0;
    auto [ares, bres] = run_session_pair(
        cfg.session, pool, data.alice, data.bob,
        [&](std::uint32_t id, const Bits& payload) {
            if (payload != data.alice[id / fpb].subblocks[id % fpb]) ++mismatched;
        });
    (void)ares;
    if (mismatched)
        throw std::logic_error(std::to_string(mismatched) +
                               " verified frames disagree with the reference key");
    PointResult pr;
    pr.label = label;
    pr.scheme = scheme;
    pr.records = std::move(bres.records);
    pr.summary = aggregate(pr.records, cfg.session.ell_frame, cfg.secret);
    return pr;
}

using PointSink = std::function<void(const PointResult&)>;

inline void write_point(std::ostream& frames_csv, std::ostream& summary_csv,
                        const Config& cfg, const PointResult& pr) {
    for (const auto& r : pr.records)
        write_frame_csv_row(frames_csv, r, cfg.session.ell_frame);
    write_summary_csv_row(summary_csv, scheme_name(pr.scheme), pr.label, pr.summary);
}

inline void run_qber_sweep(const Config& cfg, const CodePool& pool, std::uint64_t seed,
                           std::ostream& frames_csv, std::ostream& summary_csv,
                           const PointSink& progress = nullptr) {
    write_frame_csv_header(frames_csv);
    write_summary_csv_header(summary_csv);
    const auto grid = cfg.sweep.effective_qber_grid();
    const auto schemes = cfg.sweep.effective_schemes();
    std::uint64_t tag = 0;
    for (Scheme sc : schemes) {
        for (double q : grid) {
            QberProfile profile;
            profile.base_qber = q;
            auto pr = run_point(cfg, pool, sc, profile, cfg.channel, q,
                                detail::fmt_double(q), derive_seed(seed, tag++));
            write_point(frames_csv, summary_csv, cfg, pr);
            if (progress) progress(pr);
        }
    }
}

inline void run_loss_sweep(const Config& cfg, const CodePool& pool, std::uint64_t seed,
                           std::ostream& frames_csv, std::ostream& summary_csv,
                           const PointSink& progress = nullptr) {
    write_frame_csv_header(frames_csv);
    write_summary_csv_header(summary_csv);
    const auto grid = cfg.sweep.effective_loss_grid();
    const auto schemes = cfg.sweep.effective_schemes();
    std::uint64_t tag = 0x1055;
    for (Scheme sc : schemes) {
        for (double loss : grid) {
            ChannelParams params = cfg.channel;
            params.loss_db = loss;
            QberProfile profile;  // model-driven
            double e_mu = model_qber(params).sig.qber;
            auto pr = run_point(cfg, pool, sc, profile, params, std::max(e_mu, 1e-4),
                                detail::fmt_double(loss), derive_seed(seed, tag++));
            write_point(frames_csv, summary_csv, cfg, pr);
            if (progress) progress(pr);
        }
    }
}

// ============================================================================
// Replay of recorded key dumps
// ============================================================================

// Carves a recorded pair into subblock-sized frames and reconciles them.
// Decoy strings are synthesized at each frame's realized error rate, since a
// key dump carries no decoy pulses of its own.
inline PointResult run_replay(const Config& base, const CodePool& pool,
                              const std::filesystem::path& dump_path, std::uint64_t seed) {
    auto [alice_key, bob_key] = read_keydump(dump_path);
    const std::uint32_t sub_len = base.session.subblock_len();
    const auto frames = static_cast<std::uint32_t>(alice_key.size() / sub_len);
    if (frames == 0)
        throw std::runtime_error("key dump shorter than one subblock (" +
                                 std::to_string(sub_len) + " bits)");

    Config cfg = base;
    cfg.session.shared_seed = derive_seed(seed, 0x5e55);
    const std::uint32_t fpb = cfg.session.frames_per_block;
    const std::uint32_t bpf = cfg.session.decoy_bits_per_frame;

    std::vector<BlockData> ablocks, bblocks;
    PrivateRng decoy_rng(derive_seed(seed, 0xdeca));
    for (std::uint32_t first = 0; first < frames; first += fpb) {
        const std::uint32_t in_block = std::min(fpb, frames - first);
        BlockData a, b;
        for (std::uint32_t i = 0; i < in_block; ++i) {
            const std::size_t off = static_cast<std::size_t>(first + i) * sub_len;
            Bits as(alice_key.begin() + off, alice_key.begin() + off + sub_len);
            Bits bs(bob_key.begin() + off, bob_key.begin() + off + sub_len);
            double q = static_cast<double>(hamming_distance(as, bs)) / sub_len;
            a.true_qbers.push_back(q);
            b.true_qbers.push_back(q);
            auto decoy = flip_pair(bpf, std::clamp(q, 1e-6, 0.499), decoy_rng);
            a.decoy_bits.insert(a.decoy_bits.end(), decoy.alice.begin(), decoy.alice.end());
            b.decoy_bits.insert(b.decoy_bits.end(), decoy.bob.begin(), decoy.bob.end());
            a.subblocks.push_back(std::move(as));
            b.subblocks.push_back(std::move(bs));
        }
        ablocks.push_back(std::move(a));
        bblocks.push_back(std::move(b));
    }

    std::uint32_t mismatched = 0;
    auto [ares, bres] = run_session_pair(
        cfg.session, pool, ablocks, bblocks, [&](std::uint32_t id, const Bits& payload) {
            if (payload != ablocks[id / fpb].subblocks[id % fpb]) ++mismatched;
        });
    (void)ares;
    if (mismatched)
        throw std::logic_error(std::to_string(mismatched) +
                               " verified frames disagree with the recorded key");
    PointResult pr;
    pr.label = dump_path.filename().string();
    pr.scheme = cfg.session.policy.scheme;
    pr.records = std::move(bres.records);
    pr.summary = aggregate(pr.records, cfg.session.ell_frame, cfg.secret);
    return pr;
}

// ============================================================================
// Pool plumbing and live-run setup shared by the CLI and the test harness
// ============================================================================

inline CodePool::DistProvider distribution_provider(const Config& cfg) {
    if (cfg.distributions_dir.empty()) return builtin_distribution;
    std::filesystem::path dir = cfg.distributions_dir;
    return [dir](int rate_x100) {
        return DegreeDistribution::load(dir / ("rate_" + std::to_string(rate_x100) + ".txt"));
    };
}

inline std::vector<int> missing_pool_rates(const Config& cfg) {
    std::vector<int> missing;
    for (int r : kPoolRates) {
        auto path = std::filesystem::path(cfg.matrix_dir) /
                    CodePool::cache_name(r, cfg.session.ell_frame, cfg.matrix_seed);
        if (!std::filesystem::exists(path)) missing.push_back(r);
    }
    return missing;
}

inline CodePool build_pool(const Config& cfg,
                           const std::function<void(int, bool)>& progress = nullptr) {
    return CodePool::build(cfg.matrix_dir, cfg.session.ell_frame, cfg.matrix_seed,
                           distribution_provider(cfg), cfg.rate_thresholds, progress);
}

// Both ends of a live (two-process) run call this with the same config and
// seed, then keep their own half of the data.  The operating point comes from
// the channel model; elapsed times are wall-clock.
struct LiveSetup {
    SessionConfig session;
    GeneratedData data;
};

inline LiveSetup prepare_live_run(const Config& base, Scheme scheme, std::uint32_t frames,
                                  std::uint64_t seed) {
    Config cfg = base;
    cfg.session.policy.scheme = scheme;
    double e_mu = model_qber(cfg.channel).sig.qber;
    cfg.session.policy.nominal_qber = std::max(e_mu, 1e-4);
    cfg.session.shared_seed = derive_seed(seed, 0x5e55);
    cfg.session.wall_clock = true;
    QberProfile profile;  // model-driven
    LiveSetup ls;
    ls.data = generate_session_data(profile, cfg.channel, cfg.session, frames,
                                    derive_seed(seed, 0xda7a));
    ls.session = cfg.session;
    return ls;
}

// Frames CSV path -> its sibling summary path (foo.csv -> foo.summary.csv).
inline std::filesystem::path summary_path_for(const std::filesystem::path& frames_path) {
    auto p = frames_path;
    auto ext = p.extension();
    p.replace_extension();
    p += ".summary";
    p += ext.empty() ? std::filesystem::path(".csv") : ext;
    return p;
}

}  // namespace qrir
