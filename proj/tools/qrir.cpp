// Workbench driver: matrix cache generation, simulated QBER/loss sweeps,
// live two-process reconciliation over TCP, and replay of recorded key dumps.

#include "CLI11.hpp"
#include "qrir/qrir.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

namespace {

qrir::Config load_cfg(const std::string& path) {
    if (path.empty()) return {};
    return qrir::load_config(path);
}

// Sweeps refuse to construct matrices on the fly -- a cold 32k-bit pool takes
// minutes and should be a deliberate step.
qrir::CodePool open_pool(const qrir::Config& cfg, const std::string& cfg_flag) {
    auto missing = qrir::missing_pool_rates(cfg);
    if (!missing.empty()) {
        std::string rates;
        for (int r : missing) rates += (rates.empty() ? "" : ", ") + std::to_string(r);
        std::string hint = "qrir gen-matrices";
        if (!cfg_flag.empty()) hint += " --config " + cfg_flag;
        throw std::runtime_error("matrix cache in '" + cfg.matrix_dir + "' is missing rates {" +
                                 rates + "} for frame length " +
                                 std::to_string(cfg.session.ell_frame) + "; run `" + hint +
                                 "` first");
    }
    return qrir::build_pool(cfg);
}

void point_progress(const qrir::PointResult& pr) {
    std::fprintf(stderr, "  %s @ %s: frames=%llu fer=%g mean_f_ec=%g r_sec=%g\n",
                 qrir::scheme_name(pr.scheme), pr.label.c_str(),
                 static_cast<unsigned long long>(pr.summary.frames), pr.summary.fer,
                 pr.summary.mean_f_ec, pr.summary.r_sec);
}

struct SweepArgs {
    std::string config, out, scheme;
    std::uint64_t seed = 1;
    std::uint32_t frames = 0;
};

void add_sweep_options(CLI::App* cmd, SweepArgs& a, const char* default_out) {
    a.out = default_out;
    cmd->add_option("--config", a.config, "configuration file");
    cmd->add_option("--seed", a.seed, "run seed (default 1)");
    cmd->add_option("--scheme", a.scheme,
                    "restrict to one scheme (default: config sweep list, or all four)");
    cmd->add_option("--frames", a.frames, "frames per grid point (overrides config)");
    cmd->add_option("--out", a.out, "per-frame CSV path; summary lands next to it");
}

qrir::Config sweep_config(const SweepArgs& a) {
    auto cfg = load_cfg(a.config);
    if (a.frames) cfg.sweep.frames_per_point = a.frames;
    if (!a.scheme.empty()) cfg.sweep.schemes = {qrir::scheme_from_name(a.scheme)};
    return cfg;
}

int run_sweep(const SweepArgs& a, bool loss) {
    auto cfg = sweep_config(a);
    auto pool = open_pool(cfg, a.config);
    std::ofstream frames(a.out);
    if (!frames) throw std::runtime_error("cannot open output file: " + a.out);
    auto spath = qrir::summary_path_for(a.out);
    std::ofstream summary(spath);
    if (!summary) throw std::runtime_error("cannot open output file: " + spath.string());
    if (loss)
        qrir::run_loss_sweep(cfg, pool, a.seed, frames, summary, point_progress);
    else
        qrir::run_qber_sweep(cfg, pool, a.seed, frames, summary, point_progress);
    std::fprintf(stderr, "wrote %s and %s\n", a.out.c_str(), spath.string().c_str());
    return 0;
}

struct LiveArgs {
    std::string config, out = "live.csv", scheme, host, role;
    std::uint16_t port = 4870;
    std::uint64_t seed = 1;
    std::uint32_t frames = 0;
};

void add_live_options(CLI::App* cmd, LiveArgs& a, const char* default_host,
                      const char* default_role) {
    a.host = default_host;
    a.role = default_role;
    cmd->add_option("--config", a.config, "configuration file");
    cmd->add_option("--seed", a.seed, "run seed; must match the peer's");
    cmd->add_option("--scheme", a.scheme, "reconciliation scheme (default: config)");
    cmd->add_option("--frames", a.frames, "frames to process (overrides config)");
    cmd->add_option("--out", a.out, "per-frame CSV, flushed after every frame");
    cmd->add_option("--host", a.host, "address to bind / connect to");
    cmd->add_option("--port", a.port, "TCP port");
    cmd->add_option("--role", a.role, "alice (holds the reference key) or bob (decodes)")
        ->check(CLI::IsMember({"alice", "bob"}));
}

int run_live(const LiveArgs& a, bool listen) {
    auto cfg = load_cfg(a.config);
    auto scheme =
        a.scheme.empty() ? cfg.session.policy.scheme : qrir::scheme_from_name(a.scheme);
    std::uint32_t frames = a.frames ? a.frames : cfg.sweep.frames_per_point;
    const bool alice = a.role == "alice";

    auto pool = open_pool(cfg, a.config);
    auto setup = qrir::prepare_live_run(cfg, scheme, frames, a.seed);
    const auto& blocks = alice ? setup.data.alice : setup.data.bob;

    std::ofstream csv(a.out);
    if (!csv) throw std::runtime_error("cannot open output file: " + a.out);
    qrir::write_frame_csv_header(csv);
    csv.flush();
    std::uint32_t done = 0, verified = 0;
    qrir::RecordSink sink = [&](const qrir::FrameRecord& r) {
        qrir::write_frame_csv_row(csv, r, setup.session.ell_frame);
        csv.flush();
        ++done;
        verified += r.verified ? 1 : 0;
    };

    std::fprintf(stderr, "%s %s:%u as %s, %u frames of %u bits (%s)\n",
                 listen ? "listening on" : "connecting to", a.host.c_str(), a.port,
                 a.role.c_str(), frames, setup.session.ell_frame, qrir::scheme_name(scheme));
    auto link = listen ? qrir::tcp_listen_accept(a.host, a.port)
                       : qrir::tcp_connect(a.host, a.port);
    try {
        if (alice)
            qrir::run_alice_session(*link, setup.session, pool, blocks, sink);
        else
            qrir::run_bob_session(*link, setup.session, pool, blocks, sink);
    } catch (const std::exception& e) {
        csv.flush();
        std::fprintf(stderr, "session aborted after %u frames: %s\n", done, e.what());
        return 1;
    }
    std::fprintf(stderr, "done: %u/%u frames verified, records in %s\n", verified, done,
                 a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rate-adaptive LDPC reconciliation workbench"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-matrices", "construct and cache the rate pool");
    std::string gen_config;
    std::uint64_t gen_seed = 0;
    gen->add_option("--config", gen_config, "configuration file");
    auto* gen_seed_opt =
        gen->add_option("--seed", gen_seed, "construction seed (overrides config)");

    SweepArgs sweep_args, loss_args;
    auto* sweep = app.add_subcommand("sweep", "scheme comparison over a QBER grid");
    add_sweep_options(sweep, sweep_args, "sweep.csv");
    auto* loss = app.add_subcommand("loss-sweep", "scheme comparison over channel loss");
    add_sweep_options(loss, loss_args, "loss_sweep.csv");

    LiveArgs serve_args, connect_args;
    auto* serve = app.add_subcommand("serve", "run one end of a session, listening");
    add_live_options(serve, serve_args, "0.0.0.0", "alice");
    auto* connect = app.add_subcommand("connect", "run one end of a session, dialing out");
    add_live_options(connect, connect_args, "127.0.0.1", "bob");

    auto* replay = app.add_subcommand("replay", "reconcile a recorded key dump");
    SweepArgs replay_args;
    std::string dump_path;
    add_sweep_options(replay, replay_args, "replay.csv");
    replay->add_option("dump", dump_path, "key dump file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto cfg = load_cfg(gen_config);
            if (gen_seed_opt->count()) cfg.matrix_seed = gen_seed;
            qrir::build_pool(cfg, [](int rate_x100, bool cached) {
                std::fprintf(stderr, "  rate %.2f: %s\n", rate_x100 / 100.0,
                             cached ? "cached" : "built");
            });
            std::fprintf(stderr, "pool ready in %s\n", cfg.matrix_dir.c_str());
            return 0;
        }
        if (sweep->parsed()) return run_sweep(sweep_args, false);
        if (loss->parsed()) return run_sweep(loss_args, true);
        if (serve->parsed()) return run_live(serve_args, true);
        if (connect->parsed()) return run_live(connect_args, false);
        if (replay->parsed()) {
            auto cfg = sweep_config(replay_args);
            if (!replay_args.scheme.empty())
                cfg.session.policy.scheme = qrir::scheme_from_name(replay_args.scheme);
            auto pool = open_pool(cfg, replay_args.config);
            auto pr = qrir::run_replay(cfg, pool, dump_path, replay_args.seed);
            std::ofstream frames(replay_args.out);
            if (!frames) throw std::runtime_error("cannot open output file: " + replay_args.out);
            auto spath = qrir::summary_path_for(replay_args.out);
            std::ofstream summary(spath);
            if (!summary) throw std::runtime_error("cannot open output file: " + spath.string());
            qrir::write_frame_csv_header(frames);
            qrir::write_summary_csv_header(summary);
            qrir::write_point(frames, summary, cfg, pr);
            point_progress(pr);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
