#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrir/adapt.hpp"
#include "qrir/math.hpp"

namespace qrir {

// One reconciled frame, as seen by the party that recorded it.
struct FrameRecord {
    std::uint32_t frame_id = 0;
    Scheme scheme = Scheme::adaptive_asym;
    CodeSelection selection;
    bool success = false;        // decoder converged to some word
    bool verified = false;       // hash check passed
    std::uint32_t iterations_total = 0;   // own decoder iterations, all rounds
    std::uint32_t rounds_additional = 0;  // disclosure rounds beyond the first decode
    std::uint64_t d_total = 0;            // bits disclosed on top of the syndrome
    double measured_qber = 0.0;           // payload mismatch fraction, verified frames
    double elapsed_ms = 0.0;
    double qber_true = std::numeric_limits<double>::quiet_NaN();  // harness ground truth
    bool burst_flagged = false;
};

// Reconciliation efficiency: disclosed information over the Shannon minimum
// for the frame's payload.
inline double f_ec(const FrameRecord& rec, std::uint32_t ell_frame) {
    const auto& sel = rec.selection;
    const double ell_syn = (1.0 - sel.rate()) * ell_frame;
    const double payload = static_cast<double>(ell_frame) - sel.punctured - sel.shortened;
    if (payload <= 0.0) throw std::invalid_argument("f_ec: empty payload");
    if (!(rec.measured_qber > 0.0 && rec.measured_qber < 1.0))
        return std::numeric_limits<double>::quiet_NaN();
    const double denom = payload * binary_entropy(rec.measured_qber);
    return (ell_syn - sel.punctured + static_cast<double>(rec.d_total)) / denom;
}

struct SecretKeyParams {
    double kappa1_lower = 0.5;  // lower bound on the single-photon fraction
    // Upper bound on the single-photon QBER; NaN derives it as
    // e1_upper_scale * mean measured QBER.
    double e1_upper = std::numeric_limits<double>::quiet_NaN();
    double e1_upper_scale = 1.1;
};

// Asymptotic secret fraction of a block after error correction and
// verification.  Clamped at zero: a bad block yields no key, not negative key.
inline double secret_key_length(double ell_block, double fer, double mean_f_ec,
                                double mean_qber, const SecretKeyParams& params) {
    if (!(ell_block >= 0.0)) throw std::invalid_argument("secret_key_length: bad block size");
    if (!(fer >= 0.0 && fer <= 1.0)) throw std::invalid_argument("secret_key_length: bad FER");
    if (!(mean_qber >= 0.0 && mean_qber <= 0.5))
        throw std::invalid_argument("secret_key_length: bad qber");
    double e1 = params.e1_upper;
    if (std::isnan(e1)) e1 = std::min(params.e1_upper_scale * mean_qber, 0.5);
    const double gain = params.kappa1_lower * (1.0 - binary_entropy(e1));
    const double cost = mean_f_ec * binary_entropy(mean_qber);
    return std::max(0.0, ell_block * (1.0 - fer) * (gain - cost));
}

inline double secret_rate(double ell_sec, double tau_s) {
    if (!(tau_s > 0.0)) throw std::invalid_argument("secret_rate: nonpositive time");
    return ell_sec / tau_s;
}

struct BlockSummary {
    std::uint32_t frames = 0;
    double fer = 0.0;
    double mean_f_ec = 0.0;
    double std_f_ec = 0.0;
    double mean_iterations = 0.0;
    double mean_rounds = 0.0;
    double mean_d_total = 0.0;
    double mean_qber = 0.0;      // measured, over verified frames
    double mean_qber_hat = 0.0;
    double l_sec = 0.0;
    double r_sec = 0.0;
    double tau_s = 0.0;
};

// Block statistics.  FER counts every frame that did not end verified; the
// means are taken over verified frames only (all-failed blocks keep them 0).
inline BlockSummary aggregate(const std::vector<FrameRecord>& records, std::uint32_t ell_frame,
                              const SecretKeyParams& params, double gen_time_s = 0.0) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    BlockSummary bs;
    bs.frames = static_cast<std::uint32_t>(records.size());
    std::uint32_t ok = 0;
    double sum_f = 0.0, sum_f2 = 0.0, sum_it = 0.0, sum_rounds = 0.0, sum_d = 0.0;
    double sum_q = 0.0, sum_qhat = 0.0, payload_bits = 0.0;
    std::uint32_t f_count = 0;
    for (const auto& r : records) {
        bs.tau_s += r.elapsed_ms / 1000.0;
        if (!r.verified) continue;
        ++ok;
        sum_it += r.iterations_total;
        sum_rounds += r.rounds_additional;
        sum_d += static_cast<double>(r.d_total);
        sum_q += r.measured_qber;
        sum_qhat += r.selection.qber_hat;
        payload_bits += static_cast<double>(ell_frame) - r.selection.punctured - r.selection.shortened;
        const double f = f_ec(r, ell_frame);
        if (!std::isnan(f)) {
            sum_f += f;
            sum_f2 += f * f;
            ++f_count;
        }
    }
    bs.fer = 1.0 - static_cast<double>(ok) / bs.frames;
    bs.tau_s += gen_time_s;
    if (ok > 0) {
        bs.mean_iterations = sum_it / ok;
        bs.mean_rounds = sum_rounds / ok;
        bs.mean_d_total = sum_d / ok;
        bs.mean_qber = sum_q / ok;
        bs.mean_qber_hat = sum_qhat / ok;
    }
    if (f_count > 0) {
        bs.mean_f_ec = sum_f / f_count;
        double var = sum_f2 / f_count - bs.mean_f_ec * bs.mean_f_ec;
        bs.std_f_ec = std::sqrt(std::max(0.0, var));
    }
    bs.l_sec = secret_key_length(payload_bits, bs.fer, bs.mean_f_ec, bs.mean_qber, params);
    if (bs.tau_s > 0.0) bs.r_sec = secret_rate(bs.l_sec, bs.tau_s);
    return bs;
}

// ============================================================================
// CSV output.  Fixed column sets; %.9g keeps doubles round-trippable without
// locale surprises.
// ============================================================================

namespace detail {
inline std::string fmt_g(double v) {
    char buf[40];
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}
}  // namespace detail

inline constexpr const char* kFrameCsvHeader =
    "frame_id,scheme,qber_true,qber_hat,rate,p,s,d_total,rounds_additional,"
    "iterations_total,success,verified,elapsed_ms,f_ec";

inline void write_frame_csv_header(std::ostream& out) { out << kFrameCsvHeader << '\n'; }

inline void write_frame_csv_row(std::ostream& out, const FrameRecord& r, std::uint32_t ell_frame) {
    using detail::fmt_g;
    out << r.frame_id << ',' << scheme_name(r.scheme) << ',' << fmt_g(r.qber_true) << ','
        << fmt_g(r.selection.qber_hat) << ',' << fmt_g(r.selection.rate()) << ','
        << r.selection.punctured << ',' << r.selection.shortened << ',' << r.d_total << ','
        << r.rounds_additional << ',' << r.iterations_total << ',' << (r.success ? 1 : 0) << ','
        << (r.verified ? 1 : 0) << ',' << fmt_g(r.elapsed_ms) << ',' << fmt_g(f_ec(r, ell_frame))
        << '\n';
}

inline constexpr const char* kSummaryCsvHeader =
    "scheme,point,frames,fer,mean_f_ec,std_f_ec,mean_iterations,mean_rounds,"
    "mean_d_total,mean_qber,mean_qber_hat,l_sec,r_sec,tau_s";

inline void write_summary_csv_header(std::ostream& out) { out << kSummaryCsvHeader << '\n'; }

inline void write_summary_csv_row(std::ostream& out, const std::string& scheme,
                                  const std::string& point, const BlockSummary& bs) {
    using detail::fmt_g;
    out << scheme << ',' << point << ',' << bs.frames << ',' << fmt_g(bs.fer) << ','
        << fmt_g(bs.mean_f_ec) << ',' << fmt_g(bs.std_f_ec) << ',' << fmt_g(bs.mean_iterations)
        << ',' << fmt_g(bs.mean_rounds) << ',' << fmt_g(bs.mean_d_total) << ','
        << fmt_g(bs.mean_qber) << ',' << fmt_g(bs.mean_qber_hat) << ',' << fmt_g(bs.l_sec) << ','
        << fmt_g(bs.r_sec) << ',' << fmt_g(bs.tau_s) << '\n';
}

}  // namespace qrir
