#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "qrir/config.hpp"

using namespace qrir;

namespace {

Config parse_str(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

bool throws_mentioning(const std::string& text, const std::string& needle) {
    try {
        parse_str(text);
    } catch (const std::exception& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

}  // namespace

TEST_CASE("empty input yields the stock configuration", "[config]") {
    const Config c = parse_str("");

    CHECK(c.session.ell_frame == 32000);
    CHECK(c.session.policy.alpha == 0.15);
    CHECK(c.matrix_dir == "data/matrices");
    CHECK(c.distributions_dir.empty());
    CHECK(c.matrix_seed == 7);
    CHECK(c.rate_thresholds.empty());

    CHECK(c.session.estimator.gamma == 0.33);
    CHECK(c.session.estimator.window == 6);
    CHECK(c.session.estimator.penalty_qber == 0.5);
    CHECK(c.session.estimator.burst_sigma == 3.0);
    CHECK(c.session.estimator.bootstrap_qber == 0.05);

    const auto& p = c.session.policy;
    CHECK(p.scheme == Scheme::adaptive_asym);
    CHECK(p.f_start == 1.15);
    CHECK(p.f_k_step == 0.03);
    CHECK(p.n_add_max == 10);
    CHECK(p.delta == 0);
    CHECK(p.beta == 1.0);
    CHECK(p.time_budget_ms == 10000);
    CHECK(p.adaptive_round_cap == 30);
    CHECK(p.nominal_qber == 0.05);
    CHECK(p.blind_bands.empty());

    CHECK(c.session.frames_per_block == 50);
    CHECK(c.session.decoy_bits_per_frame == 1024);
    CHECK(c.session.max_iters == 60);
    CHECK(c.session.scale_step == 12.5);
    CHECK(c.session.llr_saturation == 64.0);
    CHECK(c.session.shared_seed == 1);
    CHECK(c.session.private_seed == 0);
    CHECK(c.session.cost_per_iteration_ms == 0.5);
    CHECK(c.session.latency_per_message_ms == 1.0);
    CHECK(!c.session.wall_clock);

    CHECK(c.channel.mu == 0.30);
    CHECK(c.channel.nu1 == 0.09);
    CHECK(c.channel.nu2 == 0.003);
    CHECK(c.channel.p_mu == 0.50);
    CHECK(c.channel.p_nu1 == 0.25);
    CHECK(c.channel.p_nu2 == 0.25);
    CHECK(c.channel.eta == 0.13);
    CHECK(c.channel.p_dc == 1e-6);
    CHECK(c.channel.tau_dead_us == 5.0);
    CHECK(c.channel.p_opt == 0.02);
    CHECK(c.channel.loss_db == 0.0);

    CHECK(c.secret.kappa1_lower == 0.5);
    CHECK(std::isnan(c.secret.e1_upper));
    CHECK(c.secret.e1_upper_scale == 1.1);

    CHECK(c.sweep.qber_grid.empty());
    CHECK(c.sweep.loss_grid_db.empty());
    CHECK(c.sweep.schemes.empty());
    CHECK(c.sweep.frames_per_point == 50);
}

TEST_CASE("default sweep grids", "[config]") {
    const SweepConfig sw;

    const auto q = sw.effective_qber_grid();
    REQUIRE(q.size() == 21);
    CHECK(q.front() == Catch::Approx(0.005));
    CHECK(q.back() == Catch::Approx(0.105));
    for (std::size_t i = 0; i < q.size(); ++i)
        CHECK(q[i] == Catch::Approx((i + 1) * 0.005).epsilon(1e-12));

    const auto l = sw.effective_loss_grid();
    REQUIRE(l.size() == 11);
    CHECK(l.front() == 0.0);
    CHECK(l.back() == 20.0);

    const auto s = sw.effective_schemes();
    REQUIRE(s.size() == 4);
    CHECK(s[0] == Scheme::adaptive_asym);
    CHECK(s[3] == Scheme::symmetric);

    SweepConfig own;
    own.qber_grid = {0.03};
    own.loss_grid_db = {14.0};
    own.schemes = {Scheme::symmetric};
    CHECK(own.effective_qber_grid() == std::vector<double>{0.03});
    CHECK(own.effective_loss_grid() == std::vector<double>{14.0});
    CHECK(own.effective_schemes() == std::vector<Scheme>{Scheme::symmetric});
}

TEST_CASE("full file parse", "[config]") {
    const char* text = R"(# benchmark profile
; semicolon comments work too

[frame]
ell_frame = 2000
alpha = 0.15

[pool]
matrix_dir = /tmp/mx
distributions_dir = data/distributions
seed = 99
threshold_50 = 0.11
threshold_85 = 0.024

[estimator]
gamma   =   0.25
window = 8
penalty_qber = 0.4
burst_sigma = 2.5
bootstrap_qber = 0.04

[policy]
scheme = blind_linear
f_start = 1.2
f_k_step = 0.05
n_add_max = 6
delta = 40
beta = 0.5
time_budget_ms = 5000
adaptive_round_cap = 12
nominal_qber = 0.03
blind_bands = 80:0:0.03 | 50:0.03:0.11

[session]
frames_per_block = 10
decoy_bits_per_frame = 256
max_iters = 90
scale_step = 10
llr_saturation = 48
shared_seed = 123
private_seed = 456
cost_per_iteration_ms = 0.25
latency_per_message_ms = 2
wall_clock = true

[channel]
mu = 0.5
nu1 = 0.1
nu2 = 0.01
p_mu = 0.6
p_nu1 = 0.3
p_nu2 = 0.1
eta = 0.2
p_dc = 1e-7
tau_dead_us = 4
p_opt = 0.01
loss_db = 12

[secret]
kappa1_lower = 0.6
e1_upper = 0.05
e1_upper_scale = 1.2

[sweep]
qber_grid = 0.01, 0.03, 0.06
loss_grid_db = 0, 10, 20
schemes = adaptive_asym, symmetric
frames_per_point = 25
)";
    const Config c = parse_str(text);

    CHECK(c.session.ell_frame == 2000);
    CHECK(c.matrix_dir == "/tmp/mx");
    CHECK(c.distributions_dir == "data/distributions");
    CHECK(c.matrix_seed == 99);
    REQUIRE(c.rate_thresholds.size() == 2);
    CHECK(c.rate_thresholds.at(50) == 0.11);
    CHECK(c.rate_thresholds.at(85) == 0.024);

    CHECK(c.session.estimator.gamma == 0.25);
    CHECK(c.session.estimator.window == 8);
    CHECK(c.session.estimator.penalty_qber == 0.4);
    CHECK(c.session.estimator.burst_sigma == 2.5);
    CHECK(c.session.estimator.bootstrap_qber == 0.04);

    const auto& p = c.session.policy;
    CHECK(p.scheme == Scheme::blind_linear);
    CHECK(p.f_start == 1.2);
    CHECK(p.f_k_step == 0.05);
    CHECK(p.n_add_max == 6);
    CHECK(p.delta == 40);
    CHECK(p.beta == 0.5);
    CHECK(p.time_budget_ms == 5000);
    CHECK(p.adaptive_round_cap == 12);
    CHECK(p.nominal_qber == 0.03);
    REQUIRE(p.blind_bands.size() == 2);
    CHECK(p.blind_bands[0].rate_x100 == 80);
    CHECK(p.blind_bands[0].qber_min == 0.0);
    CHECK(p.blind_bands[0].qber_max == 0.03);
    CHECK(p.blind_bands[1].rate_x100 == 50);
    CHECK(p.blind_bands[1].qber_min == 0.03);
    CHECK(p.blind_bands[1].qber_max == 0.11);

    CHECK(c.session.frames_per_block == 10);
    CHECK(c.session.decoy_bits_per_frame == 256);
    CHECK(c.session.max_iters == 90);
    CHECK(c.session.scale_step == 10.0);
    CHECK(c.session.llr_saturation == 48.0);
    CHECK(c.session.shared_seed == 123);
    CHECK(c.session.private_seed == 456);
    CHECK(c.session.cost_per_iteration_ms == 0.25);
    CHECK(c.session.latency_per_message_ms == 2.0);
    CHECK(c.session.wall_clock);

    CHECK(c.channel.mu == 0.5);
    CHECK(c.channel.nu1 == 0.1);
    CHECK(c.channel.nu2 == 0.01);
    CHECK(c.channel.p_mu == 0.6);
    CHECK(c.channel.p_nu1 == 0.3);
    CHECK(c.channel.p_nu2 == 0.1);
    CHECK(c.channel.eta == 0.2);
    CHECK(c.channel.p_dc == 1e-7);
    CHECK(c.channel.tau_dead_us == 4.0);
    CHECK(c.channel.p_opt == 0.01);
    CHECK(c.channel.loss_db == 12.0);

    CHECK(c.secret.kappa1_lower == 0.6);
    CHECK(c.secret.e1_upper == 0.05);
    CHECK(c.secret.e1_upper_scale == 1.2);

    CHECK(c.sweep.qber_grid == std::vector<double>{0.01, 0.03, 0.06});
    CHECK(c.sweep.loss_grid_db == std::vector<double>{0.0, 10.0, 20.0});
    CHECK(c.sweep.schemes == std::vector<Scheme>{Scheme::adaptive_asym, Scheme::symmetric});
    CHECK(c.sweep.frames_per_point == 25);

    // the sweep honors the parsed grids
    CHECK(c.sweep.effective_qber_grid().size() == 3);
    CHECK(c.sweep.effective_schemes().size() == 2);
}

TEST_CASE("round trip is the identity", "[config]") {
    const Config def;
    const std::string once = serialize_config(def);
    const std::string twice = serialize_config(parse_str(once));
    CHECK(once == twice);

    Config custom = def;
    custom.session.ell_frame = 2000;
    custom.matrix_dir = "cache/mx";
    custom.distributions_dir = "data/distributions";
    custom.matrix_seed = 41;
    custom.rate_thresholds = {{50, 0.11}, {70, 0.052}, {90, 0.0144}};
    custom.session.estimator.gamma = 0.4;
    custom.session.policy.scheme = Scheme::symmetric;
    custom.session.policy.beta = 0.5;
    custom.session.policy.blind_bands = {{80, 0.0, 0.03}, {60, 0.03, 0.08}};
    custom.session.wall_clock = true;
    custom.session.private_seed = 9e3;
    custom.channel.loss_db = 20.0;
    custom.secret.e1_upper = 0.033;
    custom.sweep.qber_grid = {0.01, 0.05};
    custom.sweep.loss_grid_db = {4.0};
    custom.sweep.schemes = {Scheme::blind_fixed, Scheme::blind_linear};
    custom.sweep.frames_per_point = 200;

    const std::string s1 = serialize_config(custom);
    const Config back = parse_str(s1);
    CHECK(serialize_config(back) == s1);
    CHECK(back.rate_thresholds == custom.rate_thresholds);
    CHECK(back.session.policy.blind_bands.size() == 2);
    CHECK(back.sweep.schemes == custom.sweep.schemes);
    CHECK(back.secret.e1_upper == 0.033);
}

TEST_CASE("single-photon error bound sentinel", "[config]") {
    CHECK(std::isnan(parse_str("[secret]\ne1_upper = auto\n").secret.e1_upper));
    CHECK(parse_str("[secret]\ne1_upper = 0.047\n").secret.e1_upper == 0.047);

    Config c;
    CHECK(serialize_config(c).find("e1_upper = auto\n") != std::string::npos);
    c.secret.e1_upper = 0.05;
    CHECK(serialize_config(c).find("e1_upper = 0.05\n") != std::string::npos);
}

TEST_CASE("malformed input is rejected", "[config]") {
    CHECK_THROWS_AS(parse_str("[frame\nell_frame = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("novalue\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("= 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[frame]\nell_frame = x\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[estimator]\ngamma = abc\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[estimator]\ngamma =\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[session]\nwall_clock = maybe\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[frame]\nell_frame = 1\nell_frame = 2\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[policy]\nscheme = turbo\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[policy]\nblind_bands = 80:0\n"), std::invalid_argument);

    // typos and stale keys surface by name instead of being ignored
    CHECK(throws_mentioning("[frame]\nelll_frame = 32000\n", "frame.elll_frame"));
    CHECK(throws_mentioning("[bogus]\nx = 1\n", "bogus.x"));
    CHECK(throws_mentioning("[frame]\nell_frame = q\n", "frame.ell_frame"));

    // semantic validation runs after parsing
    CHECK_THROWS_AS(parse_str("[estimator]\ngamma = 1.5\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[policy]\nf_start = 0.9\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_str("[channel]\np_mu = 0.9\n"), std::invalid_argument);
}

TEST_CASE("config file io", "[config]") {
    namespace fs = std::filesystem;
    const fs::path path =
        fs::temp_directory_path() / ("qrir_config_test." + std::to_string(::getpid()));

    Config c;
    c.session.ell_frame = 2000;
    c.matrix_seed = 55;
    c.rate_thresholds[60] = 0.07;
    save_config(path, c);
    const Config back = load_config(path);
    CHECK(back.session.ell_frame == 2000);
    CHECK(back.matrix_seed == 55);
    REQUIRE(back.rate_thresholds.size() == 1);
    CHECK(back.rate_thresholds.at(60) == 0.07);
    CHECK(serialize_config(back) == serialize_config(c));
    fs::remove(path);

    CHECK_THROWS_AS(load_config(fs::temp_directory_path() / "qrir_missing_config.ini"),
                    std::runtime_error);
}
