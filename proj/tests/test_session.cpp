#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <thread>

#include "qrir/session.hpp"

using namespace qrir;

namespace {

constexpr std::uint32_t kEll = 2000;
constexpr std::uint32_t kBudget = 300;  // 0.15 * kEll
constexpr std::uint32_t kSub = kEll - kBudget;

// Four-rate pool at a CI-sized frame length; built once per process.
const CodePool& small_pool() {
    static const CodePool pool = [] {
        CodePool p;
        p.frame_len = kEll;
        p.seed = 77;
        for (int r : {50, 60, 70, 80}) {
            ParityCheckMatrix H = peg_construct(kEll, rows_for_rate(kEll, r),
                                                builtin_distribution(r), derive_seed(77, r));
            H.untainted_columns = select_untainted(H);
            p.codes.emplace(r, CodePool::Entry{std::move(H), default_rate_threshold(r)});
        }
        return p;
    }();
    return pool;
}

SessionConfig small_cfg() {
    SessionConfig cfg;
    cfg.ell_frame = kEll;
    cfg.frames_per_block = 4;
    cfg.decoy_bits_per_frame = 400;
    cfg.policy.f_start = 1.5;  // short codes want more slack than the production default
    return cfg;
}

Bits rand_bits(std::uint32_t n, std::uint64_t seed) { return SyncRng(seed).bits(n); }

// Copy with exactly `flips` distinct positions inverted.
Bits flip_exact(Bits v, std::uint32_t flips, std::uint64_t seed) {
    auto order = SyncRng(seed).permutation(static_cast<std::uint32_t>(v.size()));
    for (std::uint32_t i = 0; i < flips; ++i) v[order[i]] ^= 1;
    return v;
}

// Virtual-clock message count: every message costs 1 ms, every decoder
// iteration 0.5 ms.
double messages_of(const FrameRecord& r, const SessionConfig& cfg) {
    return (r.elapsed_ms - cfg.cost_per_iteration_ms * r.iterations_total) /
           cfg.latency_per_message_ms;
}

}  // namespace

TEST_CASE("small pool sanity", "[session]") {
    const CodePool& pool = small_pool();
    REQUIRE(pool.codes.size() == 4);
    CHECK(pool.frame_len == kEll);
    for (int r : {50, 60, 70, 80}) {
        const auto& e = pool.at(r);
        CHECK(e.H.n_cols == kEll);
        CHECK(e.H.n_rows == rows_for_rate(kEll, r));
        CHECK_NOTHROW(e.H.validate());
        CHECK(e.threshold == default_rate_threshold(r));
        CHECK(pool.max_puncture(r) >= 100);
    }
    CHECK_THROWS_AS(pool.at(90), std::out_of_range);
}

TEST_CASE("error-free frame verifies on the basic round", "[session]") {
    const SessionConfig cfg = small_cfg();
    QberEstimatorState est;
    const Bits sub = rand_bits(kSub, 101);

    Bits corrected;
    std::uint32_t corrected_id = 999;
    auto [a, b] = run_frame_pair(cfg, small_pool(), sub, sub, est, 0.0, 7,
                                 [&](std::uint32_t id, const Bits& k) {
                                     corrected_id = id;
                                     corrected = k;
                                 });

    REQUIRE(a.verified);
    REQUIRE(b.verified);
    CHECK(a.success);
    CHECK(b.success);
    CHECK(a.frame_id == 7);
    CHECK(b.frame_id == 7);
    CHECK(b.rounds_additional == 0);
    CHECK(a.d_total == 0);
    CHECK(b.d_total == 0);
    CHECK(b.iterations_total >= 1);  // punctured bits start unknown, need one pass
    CHECK(b.measured_qber == 0.0);
    CHECK(corrected_id == 7);
    CHECK(corrected == sub);

    CHECK(a.selection.rate_x100 == b.selection.rate_x100);
    CHECK(a.selection.punctured == b.selection.punctured);
    CHECK(a.selection.shortened == b.selection.shortened);
    CHECK(b.selection.punctured + b.selection.shortened == kBudget);
    CHECK(b.selection.qber_hat == 0.05);  // bootstrap estimate drives frame one

    // virtual clock: four messages each way, decoder time only on Bob's side
    CHECK(a.elapsed_ms == 4.0);
    CHECK(messages_of(b, cfg) == Catch::Approx(4.0));

    REQUIRE(est.ema.has_value());
    CHECK(*est.ema == Catch::Approx(kQberHatMin));
    CHECK(est.decoy_n == 1);
}

TEST_CASE("errors are corrected and the estimator tracks the result", "[session]") {
    const SessionConfig cfg = small_cfg();
    const CodePool& pool = small_pool();
    QberEstimatorState est;

    const Bits a_sub = rand_bits(kSub, 202);
    const Bits b_sub = flip_exact(a_sub, 51, 303);  // 3% of the subblock

    Bits corrected;
    auto [a, b] = run_frame_pair(cfg, pool, a_sub, b_sub, est, 0.03, 0,
                                 [&](std::uint32_t, const Bits& k) { corrected = k; });

    REQUIRE(a.verified);
    REQUIRE(b.verified);
    CHECK(corrected == a_sub);
    CHECK(b.selection.rate_x100 == 60);  // bootstrap 0.05 lands here
    CHECK(b.measured_qber == Catch::Approx(51.0 / kSub));
    CHECK(b.iterations_total > 0);
    REQUIRE(est.ema.has_value());
    CHECK(*est.ema == Catch::Approx(51.0 / kSub));  // first a-posteriori seeds the average

    // second frame runs off the learned estimate instead of the bootstrap
    const Bits a2 = rand_bits(kSub, 204);
    const Bits b2 = flip_exact(a2, 51, 305);
    auto [a_next, b_next] = run_frame_pair(cfg, pool, a2, b2, est, 0.03, 1);
    REQUIRE(b_next.verified);
    CHECK(b_next.selection.qber_hat == Catch::Approx(51.0 / kSub));
    CHECK(b_next.selection.rate_x100 == 70);
    CHECK(a_next.selection.rate_x100 == 70);
    CHECK(*est.ema == Catch::Approx(51.0 / kSub).margin(1e-12));
}

TEST_CASE("failed frames poison the estimate and the next selection degrades", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.policy.adaptive_round_cap = 2;  // deny the rescue-by-disclosure path
    const CodePool& pool = small_pool();
    QberEstimatorState est;

    const Bits clean = rand_bits(kSub, 401);
    auto [a1, b1] = run_frame_pair(cfg, pool, clean, clean, est, 0.0, 0);
    REQUIRE(b1.verified);

    // decoys look clean, payload is a disaster: the stale estimate picks a
    // high rate and the frame cannot survive two tiny disclosure rounds
    const Bits a_bad = rand_bits(kSub, 402);
    const Bits b_bad = flip_exact(a_bad, 425, 403);
    auto [a2, b2] = run_frame_pair(cfg, pool, a_bad, b_bad, est, 0.0, 1);
    CHECK(b2.selection.qber_hat == Catch::Approx(kQberHatMin));
    CHECK(b2.selection.rate_x100 == 80);
    CHECK(!a2.verified);
    CHECK(!b2.verified);
    CHECK(b2.rounds_additional <= cfg.policy.adaptive_round_cap);
    CHECK(a2.d_total == b2.d_total);

    // penalty pushes the estimate up; no pool rate trusts it -> strongest code
    const Bits clean3 = rand_bits(kSub, 404);
    auto [a3, b3] = run_frame_pair(cfg, pool, clean3, clean3, est, 0.0, 2);
    CHECK(b3.selection.qber_hat > b2.selection.qber_hat);
    CHECK(b3.selection.qber_hat ==
          Catch::Approx((1.0 - cfg.estimator.gamma) * kQberHatMin +
                        cfg.estimator.gamma * cfg.estimator.penalty_qber));
    CHECK(b3.selection.rate_x100 == 50);
    CHECK(b3.selection.punctured == 0);
    REQUIRE(b3.verified);
}

TEST_CASE("blind fixed-step disclosure", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.policy.scheme = Scheme::blind_fixed;
    cfg.policy.nominal_qber = 0.05;
    const CodePool& pool = small_pool();
    QberEstimatorState est;

    const Bits a_sub = rand_bits(kSub, 501);
    const Bits b_sub = flip_exact(a_sub, 85, 502);  // 5%

    Bits corrected;
    auto [a, b] = run_frame_pair(cfg, pool, a_sub, b_sub, est, 0.05, 0,
                                 [&](std::uint32_t, const Bits& k) { corrected = k; });

    CHECK(b.selection.rate_x100 == 60);
    CHECK(b.selection.qber_hat == 0.05);  // nominal, no estimator involved
    const std::uint32_t p = b.selection.punctured;
    CHECK(p == std::min(kBudget, pool.max_puncture(60)));

    REQUIRE(a.verified == b.verified);
    REQUIRE(b.verified);
    CHECK(corrected == a_sub);
    CHECK(b.rounds_additional >= 1);
    CHECK(b.rounds_additional <= cfg.policy.n_add_max);
    CHECK(a.d_total == b.d_total);

    // fixed schedule: ceil(p / n_add_max) per round until the pool runs dry
    const std::uint32_t delta = std::max(1u, p / cfg.policy.n_add_max);
    std::uint64_t expect_d = 0;
    std::uint32_t rem = p;
    for (std::uint32_t k = 0; k < b.rounds_additional; ++k) {
        const std::uint32_t step = std::min(delta, rem);
        expect_d += step;
        rem -= step;
    }
    CHECK(b.d_total == expect_d);

    CHECK(messages_of(b, cfg) == Catch::Approx(4.0 + 2.0 * b.rounds_additional));
    CHECK(messages_of(b, cfg) <= 4.0 + 2.0 * cfg.policy.n_add_max);
}

TEST_CASE("blind linear disclosure ramps", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.policy.scheme = Scheme::blind_linear;
    cfg.policy.nominal_qber = 0.05;
    const CodePool& pool = small_pool();
    QberEstimatorState est;

    const Bits a_sub = rand_bits(kSub, 601);
    const Bits b_sub = flip_exact(a_sub, 85, 602);

    auto [a, b] = run_frame_pair(cfg, pool, a_sub, b_sub, est, 0.05, 0);

    CHECK(b.selection.rate_x100 == 60);
    const std::uint32_t p = b.selection.punctured;
    REQUIRE(a.verified == b.verified);
    REQUIRE(b.verified);
    CHECK(a.d_total == b.d_total);
    CHECK(b.rounds_additional >= 1);
    CHECK(b.rounds_additional <= cfg.policy.n_add_max);

    const std::uint32_t n = cfg.policy.n_add_max;
    const std::uint32_t delta = std::max(1u, 2 * p / (n * (n + 1)));
    std::uint64_t expect_d = 0;
    std::uint32_t rem = p;
    for (std::uint32_t k = 1; k <= b.rounds_additional; ++k) {
        const std::uint32_t step = std::min(k * delta, rem);
        expect_d += step;
        rem -= step;
    }
    CHECK(b.d_total == expect_d);
}

TEST_CASE("symmetric frames decode on both sides", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.policy.scheme = Scheme::symmetric;
    const CodePool& pool = small_pool();

    SECTION("error-free basic round") {
        QberEstimatorState est;
        const Bits sub = rand_bits(kSub, 701);
        auto [a, b] = run_frame_pair(cfg, pool, sub, sub, est, 0.0, 0);
        REQUIRE(a.verified);
        REQUIRE(b.verified);
        CHECK(a.iterations_total >= 1);  // Alice decodes too in this scheme
        CHECK(b.iterations_total >= 1);
        CHECK(a.d_total == 0);
        CHECK(b.d_total == 0);
        // extra syndrome message vs the asymmetric flow
        CHECK(messages_of(a, cfg) == Catch::Approx(5.0));
        CHECK(messages_of(b, cfg) == Catch::Approx(5.0));
    }

    SECTION("failing frame resolved by LLR exchange") {
        QberEstimatorState est;
        const Bits a_sub = rand_bits(kSub, 702);
        const Bits b_sub = flip_exact(a_sub, 136, 703);  // 8%

        Bits corrected;
        auto [a, b] = run_frame_pair(cfg, pool, a_sub, b_sub, est, 0.08, 0,
                                     [&](std::uint32_t, const Bits& k) { corrected = k; });

        REQUIRE(a.verified == b.verified);
        REQUIRE(b.verified);
        CHECK(corrected == a_sub);
        CHECK(b.rounds_additional >= 1);
        CHECK(a.rounds_additional == b.rounds_additional);
        CHECK(a.d_total == b.d_total);
        CHECK(b.d_total > 0);
        CHECK(a.iterations_total > 0);
        CHECK(b.measured_qber == Catch::Approx(136.0 / kSub));
        REQUIRE(est.ema.has_value());
        CHECK(*est.ema == Catch::Approx(136.0 / kSub));
    }
}

TEST_CASE("round cap zero kills undecodable frames immediately", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.policy.scheme = Scheme::blind_fixed;
    cfg.policy.nominal_qber = 0.005;  // strongest blind band: rate 80
    cfg.policy.n_add_max = 0;
    const CodePool& pool = small_pool();
    QberEstimatorState est;

    const Bits a_sub = rand_bits(kSub, 801);
    const Bits b_sub = flip_exact(a_sub, 170, 802);  // 10%, hopeless at rate 80

    auto [a, b] = run_frame_pair(cfg, pool, a_sub, b_sub, est, 0.1, 0);

    CHECK(b.selection.rate_x100 == 80);
    CHECK(!a.success);
    CHECK(!b.success);
    CHECK(!a.verified);
    CHECK(!b.verified);
    CHECK(b.rounds_additional == 0);
    CHECK(a.d_total == 0);
    CHECK(b.d_total == 0);
    CHECK(b.iterations_total == cfg.max_iters);
    CHECK(messages_of(b, cfg) == Catch::Approx(3.0));  // select, syndrome, abort
    CHECK(a.elapsed_ms == 3.0);
}

TEST_CASE("sessions refuse a pool of the wrong frame length", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.ell_frame = 1600;
    CHECK_THROWS_AS(run_session_pair(cfg, small_pool(), {}, {}), std::invalid_argument);

    auto [ra, rb] = run_session_pair(small_cfg(), small_pool(), {}, {});
    CHECK(ra.records.empty());
    CHECK(rb.records.empty());
}

TEST_CASE("decoy exchange validation", "[session]") {
    const SessionConfig cfg = small_cfg();
    const CodePool& pool = small_pool();

    auto reject = [&](const DecoyMsg& wire, const BlockData& block) {
        auto [la, lb] = make_memory_link_pair();
        std::thread t([&, l = la.get()] { l->send(wire); });
        QberEstimatorState est;
        PrivateRng priv(5);
        CHECK_THROWS_AS(bob_run_block(*lb, cfg, pool, est, block, 0, priv), ProtocolError);
        t.join();
    };

    BlockData block;
    block.subblocks = {rand_bits(kSub, 901)};
    block.decoy_bits = rand_bits(400, 902);

    reject(DecoyMsg{0, rand_bits(100, 903)}, block);  // length mismatch
    reject(DecoyMsg{5, rand_bits(400, 904)}, block);  // wrong block id

    BlockData off;  // decoy string does not cover frames * bits-per-frame
    off.subblocks = {rand_bits(kSub, 905)};
    off.decoy_bits = rand_bits(399, 906);
    reject(DecoyMsg{0, rand_bits(399, 907)}, off);
}

TEST_CASE("burst inside a block drops the selected rate", "[session]") {
    SessionConfig cfg = small_cfg();
    cfg.frames_per_block = 12;
    const CodePool& pool = small_pool();
    const std::uint32_t bpf = cfg.decoy_bits_per_frame;

    const std::vector<double> qs = {0.02, 0.02, 0.02, 0.02, 0.02, 0.02,
                                    0.08, 0.08, 0.08, 0.02, 0.02, 0.02};
    BlockData alice, bob;
    alice.true_qbers = qs;
    bob.true_qbers = qs;
    for (std::uint32_t i = 0; i < qs.size(); ++i) {
        const auto sub_flips = static_cast<std::uint32_t>(qs[i] * kSub + 0.5);
        const auto decoy_flips = static_cast<std::uint32_t>(qs[i] * bpf + 0.5);
        Bits as = rand_bits(kSub, 1000 + i);
        Bits ds = rand_bits(bpf, 2000 + i);
        bob.subblocks.push_back(flip_exact(as, sub_flips, 3000 + i));
        bob.decoy_bits.insert(bob.decoy_bits.end(), ds.begin(), ds.end());
        Bits dsf = flip_exact(std::move(ds), decoy_flips, 4000 + i);
        alice.decoy_bits.insert(alice.decoy_bits.end(), dsf.begin(), dsf.end());
        alice.subblocks.push_back(std::move(as));
    }

    std::map<std::uint32_t, Bits> keys;
    auto [ra, rb] = run_session_pair(cfg, pool, {alice}, {bob},
                                     [&](std::uint32_t id, const Bits& k) { keys[id] = k; });

    REQUIRE(ra.records.size() == 12);
    REQUIRE(rb.records.size() == 12);
    std::uint32_t verified = 0;
    for (std::uint32_t i = 0; i < 12; ++i) {
        const auto& ar = ra.records[i];
        const auto& br = rb.records[i];
        CHECK(ar.frame_id == i);
        CHECK(br.frame_id == i);
        CHECK(ar.verified == br.verified);
        CHECK(ar.d_total == br.d_total);
        CHECK(br.qber_true == qs[i]);
        if (br.verified) {
            ++verified;
            REQUIRE(keys.count(i) == 1);
            CHECK(keys[i] == alice.subblocks[i]);
        }
    }
    CHECK(verified >= 10);
    for (std::uint32_t i = 0; i < 6; ++i) CHECK(rb.records[i].verified);

    // flat decoy history makes the onset unmistakable
    const auto& onset = rb.records[6];
    CHECK(onset.burst_flagged);
    CHECK(onset.selection.qber_hat == Catch::Approx(0.08));  // straight from the decoys
    CHECK(onset.selection.rate_x100 == 50);

    double calm_rate = 0.0, burst_rate = 0.0;
    for (std::uint32_t i = 0; i < 6; ++i) calm_rate += rb.records[i].selection.rate_x100;
    for (std::uint32_t i = 6; i < 9; ++i) burst_rate += rb.records[i].selection.rate_x100;
    CHECK(burst_rate / 3.0 < calm_rate / 6.0);
}

TEST_CASE("all four schemes complete a session", "[session]") {
    const CodePool& pool = small_pool();
    for (Scheme sc : {Scheme::adaptive_asym, Scheme::blind_fixed, Scheme::blind_linear,
                      Scheme::symmetric}) {
        INFO("scheme " << scheme_name(sc));
        SessionConfig cfg = small_cfg();
        cfg.policy.scheme = sc;
        cfg.policy.nominal_qber = 0.02;
        cfg.frames_per_block = 3;
        const std::uint32_t bpf = cfg.decoy_bits_per_frame;

        std::vector<BlockData> ablocks, bblocks;
        for (std::uint32_t blk = 0; blk < 2; ++blk) {
            BlockData a, b;
            for (std::uint32_t i = 0; i < 3; ++i) {
                const std::uint64_t tag = blk * 16 + i;
                Bits as = rand_bits(kSub, 5000 + tag);
                Bits ds = rand_bits(bpf, 6000 + tag);
                b.subblocks.push_back(flip_exact(as, 17, 7000 + tag));  // 1%
                b.decoy_bits.insert(b.decoy_bits.end(), ds.begin(), ds.end());
                Bits dsf = flip_exact(std::move(ds), 4, 8000 + tag);
                a.decoy_bits.insert(a.decoy_bits.end(), dsf.begin(), dsf.end());
                a.subblocks.push_back(std::move(as));
                a.true_qbers.push_back(0.01);
                b.true_qbers.push_back(0.01);
            }
            ablocks.push_back(std::move(a));
            bblocks.push_back(std::move(b));
        }

        std::map<std::uint32_t, Bits> keys;
        auto [ra, rb] = run_session_pair(cfg, pool, ablocks, bblocks,
                                         [&](std::uint32_t id, const Bits& k) { keys[id] = k; });

        REQUIRE(ra.records.size() == 6);
        REQUIRE(rb.records.size() == 6);
        for (std::uint32_t i = 0; i < 6; ++i) {
            const auto& ar = ra.records[i];
            const auto& br = rb.records[i];
            REQUIRE(br.verified);
            REQUIRE(ar.verified);
            CHECK(ar.d_total == br.d_total);
            CHECK(br.scheme == sc);
            CHECK(br.measured_qber == Catch::Approx(17.0 / kSub));
            const auto& ref = ablocks[i / 3].subblocks[i % 3];
            REQUIRE(keys.count(br.frame_id) == 1);
            CHECK(keys[br.frame_id] == ref);
        }
    }
}

TEST_CASE("minimum-confidence selection for the symmetric exchange", "[session]") {
    const CodePool& pool = small_pool();
    const auto& H = pool.at(80).H;
    CodeSelection sel{80, std::min(10u, H.max_punctured()), 0, 0.05};
    sel.shortened = kBudget - sel.punctured;

    PrivateRng priv(99);
    FrameAssembly f = build_frame(H, rand_bits(kSub, 98), sel, 1234, priv);
    LlrVector llrs = init_llrs(f, 0.05, 64.0);
    for (std::uint32_t i = 0; i < kEll; ++i)
        llrs.values[i] = (i % 2 ? -1.0 : 1.0) * static_cast<double>((i * 37) % 101);

    f.take_disclosure(5);                      // a few already revealed
    const std::uint32_t payload0 = f.payload_positions[0];
    f.apply_disclosure({payload0}, {f.bits[payload0]});  // and one pinned by the peer

    auto oracle = [&](std::uint32_t d) {
        std::vector<std::uint32_t> cand;
        for (std::uint32_t i = 0; i < kEll; ++i)
            if (!f.sent[i] && !f.known[i] && f.cls[i] != PosClass::shortened)
                cand.push_back(i);
        std::sort(cand.begin(), cand.end(), [&](std::uint32_t x, std::uint32_t y) {
            double mx = std::abs(llrs.values[x]), my = std::abs(llrs.values[y]);
            if (mx != my) return mx < my;
            return x < y;
        });
        if (cand.size() > d) cand.resize(d);
        std::sort(cand.begin(), cand.end());
        return cand;
    };

    CHECK(detail::pick_min_llr(llrs, f, 0).empty());
    CHECK(detail::pick_min_llr(llrs, f, 8) == oracle(8));
    CHECK(detail::pick_min_llr(llrs, f, 100) == oracle(100));
    CHECK(detail::pick_min_llr(llrs, f, kEll + 5) == oracle(kEll + 5));
    const auto all = detail::pick_min_llr(llrs, f, kEll + 5);
    CHECK(all.size() == kEll - sel.shortened - 5 - 1);
}
