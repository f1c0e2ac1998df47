#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrir/ldpc.hpp"
#include "qrir/math.hpp"

namespace qrir {

// ============================================================================
// A-priori QBER estimation
// ============================================================================

struct EstimatorConfig {
    double gamma = 0.33;        // EMA smoothing factor
    std::uint32_t window = 6;   // sliding window length (frames)
    double penalty_qber = 0.5;  // folded in on verification failure
    double burst_sigma = 3.0;   // decoy deviation threshold, in sigmas
    double bootstrap_qber = 0.05;  // prior before any verified frame

    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("estimator: gamma outside (0,1)");
        if (window < 2) throw std::invalid_argument("estimator: window < 2");
    }
};

struct QberEstimatorState {
    // Last `window` a-posteriori values, penalties substituted on failure.
    std::deque<double> verified_qbers;
    std::optional<double> ema;
    // Weak-decoy QBERs of the current block plus running moments carried
    // across blocks (Welford).
    std::vector<double> decoy_qbers;
    std::uint64_t decoy_n = 0;
    double decoy_mean = 0.0;
    double decoy_m2 = 0.0;

    double decoy_std() const {
        if (decoy_n < 2) return 0.0;
        return std::sqrt(decoy_m2 / static_cast<double>(decoy_n));
    }
};

// The estimate over the window is recomputed from scratch: the oldest value
// seeds the average, newer ones fold in with weight gamma.  A plain running
// EMA would never forget a penalty; the windowed form does after `window`
// verified frames.
inline void ema_recompute(const EstimatorConfig& cfg, QberEstimatorState& st) {
    double e = st.verified_qbers.front();
    for (std::size_t i = 1; i < st.verified_qbers.size(); ++i)
        e = cfg.gamma * st.verified_qbers[i] + (1.0 - cfg.gamma) * e;
    st.ema = e;
}

inline void ema_update(const EstimatorConfig& cfg, QberEstimatorState& st, double observed_qber) {
    if (!(observed_qber > 0.0 && observed_qber <= 0.5))
        throw std::invalid_argument("ema_update: observed qber outside (0, 0.5]");
    st.verified_qbers.push_back(observed_qber);
    while (st.verified_qbers.size() > cfg.window) st.verified_qbers.pop_front();
    ema_recompute(cfg, st);
}

inline void apply_verification_feedback(const EstimatorConfig& cfg, QberEstimatorState& st,
                                        bool verified_ok, double measured_qber) {
    ema_update(cfg, st, verified_ok ? measured_qber : cfg.penalty_qber);
}

// Burst test against the running decoy statistics; the current sample is
// compared first and folded in afterwards (note_decoy).
inline bool detect_burst(const EstimatorConfig& cfg, const QberEstimatorState& st,
                         double current_decoy_qber) {
    if (st.decoy_n < 2) return false;
    const double dev = std::abs(current_decoy_qber - st.decoy_mean);
    const double sd = st.decoy_std();
    if (sd == 0.0) return dev > 0.0;  // flat history: any movement counts
    return dev >= cfg.burst_sigma * sd;
}

inline void note_decoy(QberEstimatorState& st, double decoy_qber) {
    st.decoy_qbers.push_back(decoy_qber);
    st.decoy_n++;
    double delta = decoy_qber - st.decoy_mean;
    st.decoy_mean += delta / static_cast<double>(st.decoy_n);
    st.decoy_m2 += delta * (decoy_qber - st.decoy_mean);
}

inline constexpr double kQberHatMin = 0.001;
inline constexpr double kQberHatMax = 0.499;

// Burst frames fall back to the current weak-decoy QBER as an upper bound;
// otherwise the EMA is trusted.
inline double a_priori_qber(const EstimatorConfig& cfg, const QberEstimatorState& st,
                            double current_decoy_qber) {
    double est;
    if (detect_burst(cfg, st, current_decoy_qber)) {
        est = current_decoy_qber;
    } else if (st.ema) {
        est = *st.ema;
    } else {
        throw std::logic_error("a_priori_qber: estimator unseeded (bootstrap required)");
    }
    return std::clamp(est, kQberHatMin, kQberHatMax);
}

// ============================================================================
// Code selection
// ============================================================================

struct CodeSelection {
    int rate_x100 = 0;
    std::uint32_t punctured = 0;
    std::uint32_t shortened = 0;
    double qber_hat = 0.0;

    double rate() const { return rate_x100 / 100.0; }
};

enum class Scheme { adaptive_asym, blind_fixed, blind_linear, symmetric };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::adaptive_asym: return "adaptive_asym";
        case Scheme::blind_fixed: return "blind_fixed";
        case Scheme::blind_linear: return "blind_linear";
        case Scheme::symmetric: return "symmetric";
    }
    return "?";
}

inline Scheme scheme_from_name(const std::string& name) {
    if (name == "adaptive_asym") return Scheme::adaptive_asym;
    if (name == "blind_fixed") return Scheme::blind_fixed;
    if (name == "blind_linear") return Scheme::blind_linear;
    if (name == "symmetric") return Scheme::symmetric;
    throw std::invalid_argument("unknown scheme: " + name);
}

// Nominal-QBER band -> code rate, for the blind schemes that pick a fixed
// rate per operating point instead of estimating.
struct BlindRateBand {
    int rate_x100;
    double qber_min, qber_max;  // [min, max)
};

inline std::vector<BlindRateBand> default_blind_bands(Scheme scheme) {
    if (scheme == Scheme::blind_linear)
        return {{80, 0.00, 0.03}, {60, 0.03, 0.08}, {50, 0.08, 0.11}};
    return {{80, 0.00, 0.03}, {70, 0.03, 0.05}, {60, 0.05, 0.08}, {50, 0.08, 0.11}};
}

struct RoundPolicy {
    Scheme scheme = Scheme::adaptive_asym;
    double alpha = 0.15;        // punctured+shortened fraction of the frame
    double f_start = 1.15;      // initial target efficiency
    double f_k_step = 0.03;     // efficiency step per additional round
    std::uint32_t n_add_max = 10;   // blind additional-round cap
    std::uint32_t delta = 0;        // blind per-round disclosure; 0 = derive from p
    double beta = 1.0;              // symmetric disclosure scale, 0.5 or 1
    std::uint32_t time_budget_ms = 10000;
    std::uint32_t adaptive_round_cap = 30;  // safety cap, far above working range
    double nominal_qber = 0.05;             // operating point for blind schemes
    std::vector<BlindRateBand> blind_bands;  // empty = defaults for the scheme

    void validate() const {
        if (!(f_start > 1.0)) throw std::invalid_argument("policy: f_start must exceed 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("policy: alpha outside (0,1)");
    }
};

inline std::uint32_t alpha_budget(std::uint32_t ell_frame, double alpha) {
    double exact = alpha * ell_frame;
    auto rounded = static_cast<std::uint32_t>(std::lround(exact));
    if (std::abs(exact - rounded) > 1e-6)
        throw std::invalid_argument("alpha * ell_frame must be integral");
    return rounded;
}

// Best {R, p, s} for the estimate: for each pool rate, p makes the punctured
// code's rate land on 1 - f_start*h2(q) over the payload; rates survive if
// p <= p_R, s >= 0 and q below the rate's threshold; the highest surviving
// rate wins.  When nothing survives, puncturing gets clamped to the budget of
// the highest rate still below threshold (keeps R monotone in q when exact
// puncturing is out of reach); with no trusted rate at all, the strongest
// code runs fully shortened.
inline CodeSelection select_code(const CodePool& pool, double qber_hat,
                                 const RoundPolicy& policy) {
    if (!(qber_hat > 0.0 && qber_hat < 0.5))
        throw std::invalid_argument("select_code: qber_hat outside (0, 0.5)");
    policy.validate();
    if (pool.codes.empty()) throw std::invalid_argument("select_code: empty pool");
    const std::uint32_t ell = pool.frame_len;
    const std::uint32_t budget = alpha_budget(ell, policy.alpha);
    const double h = binary_entropy(qber_hat);
    const auto p_wanted = [&](int r) {
        double exact = ell * (1.0 - r / 100.0 - (1.0 - policy.alpha) * policy.f_start * h);
        return static_cast<std::int64_t>(std::ceil(exact - 1e-12));
    };

    for (auto it = pool.codes.rbegin(); it != pool.codes.rend(); ++it) {
        std::int64_t p = std::max<std::int64_t>(p_wanted(it->first), 0);
        std::int64_t s = static_cast<std::int64_t>(budget) - p;
        if (s < 0) continue;
        if (p > it->second.H.max_punctured()) continue;
        if (!(qber_hat < it->second.threshold)) continue;
        // descending iteration: first survivor has maximum R
        return {it->first, static_cast<std::uint32_t>(p), static_cast<std::uint32_t>(s), qber_hat};
    }
    for (auto it = pool.codes.rbegin(); it != pool.codes.rend(); ++it) {
        if (!(qber_hat < it->second.threshold)) continue;
        auto p = static_cast<std::uint32_t>(
            std::clamp<std::int64_t>(p_wanted(it->first), 0, budget));
        p = std::min(p, it->second.H.max_punctured());
        return {it->first, p, budget - p, qber_hat};
    }
    return {pool.codes.begin()->first, 0, budget, qber_hat};
}

// Blind selection: rate from the nominal-QBER band table, maximum puncturing.
inline CodeSelection select_blind(const CodePool& pool, const RoundPolicy& policy) {
    policy.validate();
    const auto bands = policy.blind_bands.empty() ? default_blind_bands(policy.scheme)
                                                  : policy.blind_bands;
    if (bands.empty()) throw std::invalid_argument("select_blind: empty band table");
    const double q = policy.nominal_qber;
    int rate = 0;
    const BlindRateBand* lo = &bands.front();
    const BlindRateBand* hi = &bands.front();
    for (const auto& b : bands) {
        if (q >= b.qber_min && q < b.qber_max) rate = b.rate_x100;
        if (b.qber_min < lo->qber_min) lo = &b;
        if (b.qber_max > hi->qber_max) hi = &b;
    }
    if (rate == 0) rate = q < lo->qber_min ? lo->rate_x100 : hi->rate_x100;
    const std::uint32_t budget = alpha_budget(pool.frame_len, policy.alpha);
    std::uint32_t p = std::min(budget, pool.max_puncture(rate));
    return {rate, p, budget - p, policy.nominal_qber};
}

// ============================================================================
// Disclosure schedules
// ============================================================================

struct DisclosureState {
    std::vector<std::uint32_t> d_history;  // d_1..d_k (d_0 = 0 implicit)
    std::uint32_t punctured_remaining = 0;
    std::uint32_t payload_remaining = 0;

    std::uint32_t k() const { return static_cast<std::uint32_t>(d_history.size()); }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto d : d_history) t += d;
        return t;
    }
    std::uint32_t remaining() const { return punctured_remaining + payload_remaining; }
};

// Bits to disclose in additional round k+1; 0 signals exhaustion.
inline std::uint32_t next_disclosure_count(const RoundPolicy& policy,
                                           const DisclosureState& disc,
                                           const CodeSelection& sel,
                                           std::uint32_t ell_syndrome,
                                           std::uint32_t ell_frame) {
    const std::uint32_t k = disc.k() + 1;  // round being planned
    switch (policy.scheme) {
        case Scheme::adaptive_asym: {
            if (disc.remaining() == 0) return 0;
            const double payload = static_cast<double>(ell_frame) - sel.punctured - sel.shortened;
            const double ratio =
                (static_cast<double>(ell_syndrome) - sel.punctured + static_cast<double>(disc.total())) /
                (payload * binary_entropy(sel.qber_hat));
            const double f_k = policy.f_start + policy.f_k_step * k;
            double d = std::abs(ratio - f_k) * ell_frame * sel.qber_hat;
            auto count = static_cast<std::uint64_t>(std::ceil(d - 1e-12));
            if (count < 1) count = 1;
            return static_cast<std::uint32_t>(std::min<std::uint64_t>(count, disc.remaining()));
        }
        case Scheme::blind_fixed: {
            if (disc.punctured_remaining == 0 || policy.n_add_max == 0) return 0;
            std::uint32_t delta = policy.delta > 0
                                      ? policy.delta
                                      : std::max<std::uint32_t>(1, sel.punctured / policy.n_add_max);
            return std::min(delta, disc.punctured_remaining);
        }
        case Scheme::blind_linear: {
            if (disc.punctured_remaining == 0 || policy.n_add_max == 0) return 0;
            std::uint32_t delta =
                policy.delta > 0
                    ? policy.delta
                    : std::max<std::uint32_t>(
                          1, 2 * sel.punctured / (policy.n_add_max * (policy.n_add_max + 1)));
            std::uint64_t d = static_cast<std::uint64_t>(k) * delta;
            return static_cast<std::uint32_t>(
                std::min<std::uint64_t>(d, disc.punctured_remaining));
        }
        case Scheme::symmetric: {
            if (disc.remaining() == 0) return 0;
            double d = std::ceil(ell_frame * (0.028 - 0.02 * sel.rate()) * policy.beta - 1e-12);
            auto count = static_cast<std::uint64_t>(std::max(d, 1.0));
            return static_cast<std::uint32_t>(std::min<std::uint64_t>(count, disc.remaining()));
        }
    }
    return 0;
}

}  // namespace qrir
