#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrir/metrics.hpp"
#include "qrir/session.hpp"
#include "qrir/simchannel.hpp"

namespace qrir {

struct SweepConfig {
    std::vector<double> qber_grid;     // empty: 0.005 .. 0.105 step 0.005
    std::vector<double> loss_grid_db;  // empty: 0 .. 20 step 2
    std::vector<Scheme> schemes;       // empty: all four
    std::uint32_t frames_per_point = 50;

    std::vector<double> effective_qber_grid() const {
        if (!qber_grid.empty()) return qber_grid;
        std::vector<double> g;
        for (int i = 1; i <= 21; ++i) g.push_back(i * 0.005);
        return g;
    }
    std::vector<double> effective_loss_grid() const {
        if (!loss_grid_db.empty()) return loss_grid_db;
        std::vector<double> g;
        for (int i = 0; i <= 10; ++i) g.push_back(i * 2.0);
        return g;
    }
    std::vector<Scheme> effective_schemes() const {
        if (!schemes.empty()) return schemes;
        return {Scheme::adaptive_asym, Scheme::blind_fixed, Scheme::blind_linear,
                Scheme::symmetric};
    }
};

struct Config {
    SessionConfig session;
    ChannelParams channel;
    SecretKeyParams secret;
    SweepConfig sweep;
    std::string matrix_dir = "data/matrices";
    std::string distributions_dir;  // empty: built-in degree tables
    std::uint64_t matrix_seed = 7;
    std::map<int, double> rate_thresholds;  // empty entries: 5%-margin default
};

// ============================================================================
// key = value sections; # and ; comments.  Serialization is canonical, so
// parse -> serialize -> parse is the identity on every field.
// ============================================================================

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s, const std::string& key) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::invalid_argument("config: bad number for " + key + ": '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& key) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw std::invalid_argument("config: bad integer for " + key + ": '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw std::invalid_argument("config: bad bool for " + key + ": '" + s + "'");
}

inline std::string fmt_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(trim(cur));
    return out;
}

using IniMap = std::map<std::string, std::map<std::string, std::string>>;

inline IniMap parse_ini(std::istream& in) {
    IniMap ini;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            ini[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        if (!ini[section].emplace(key, val).second)
            throw std::invalid_argument("config: duplicate key " + section + "." + key);
    }
    return ini;
}

// Tracks consumption so leftovers (typos, stale keys) are flagged.
class IniReader {
  public:
    explicit IniReader(IniMap ini) : ini_(std::move(ini)) {}

    bool has(const std::string& sec, const std::string& key) const {
        auto s = ini_.find(sec);
        return s != ini_.end() && s->second.count(key);
    }
    std::string take(const std::string& sec, const std::string& key, const std::string& dflt) {
        auto s = ini_.find(sec);
        if (s == ini_.end()) return dflt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return dflt;
        used_.insert(sec + "." + key);
        return k->second;
    }
    double take_double(const std::string& sec, const std::string& key, double dflt) {
        auto s = take(sec, key, "");
        return s.empty() && !has(sec, key) ? dflt : parse_double(s, sec + "." + key);
    }
    std::uint64_t take_u64(const std::string& sec, const std::string& key, std::uint64_t dflt) {
        auto s = take(sec, key, "");
        return s.empty() && !has(sec, key) ? dflt : parse_u64(s, sec + "." + key);
    }
    bool take_bool(const std::string& sec, const std::string& key, bool dflt) {
        auto s = take(sec, key, "");
        return s.empty() && !has(sec, key) ? dflt : parse_bool(s, sec + "." + key);
    }

    void finish() const {
        for (const auto& [sec, kv] : ini_)
            for (const auto& [key, val] : kv)
                if (!used_.count(sec + "." + key))
                    throw std::invalid_argument("config: unknown key " + sec + "." + key);
    }

  private:
    IniMap ini_;
    std::set<std::string> used_;
};

}  // namespace detail

inline Config parse_config(std::istream& in) {
    using namespace detail;
    IniReader r(parse_ini(in));
    Config c;

    c.session.ell_frame = static_cast<std::uint32_t>(r.take_u64("frame", "ell_frame", 32000));
    c.session.policy.alpha = r.take_double("frame", "alpha", 0.15);

    c.matrix_dir = r.take("pool", "matrix_dir", c.matrix_dir);
    c.distributions_dir = r.take("pool", "distributions_dir", "");
    c.matrix_seed = r.take_u64("pool", "seed", c.matrix_seed);
    for (int rate : kPoolRates) {
        std::string key = "threshold_" + std::to_string(rate);
        if (r.has("pool", key))
            c.rate_thresholds[rate] = r.take_double("pool", key, 0.0);
    }

    auto& e = c.session.estimator;
    e.gamma = r.take_double("estimator", "gamma", e.gamma);
    e.window = static_cast<std::uint32_t>(r.take_u64("estimator", "window", e.window));
    e.penalty_qber = r.take_double("estimator", "penalty_qber", e.penalty_qber);
    e.burst_sigma = r.take_double("estimator", "burst_sigma", e.burst_sigma);
    e.bootstrap_qber = r.take_double("estimator", "bootstrap_qber", e.bootstrap_qber);

    auto& p = c.session.policy;
    p.scheme = scheme_from_name(r.take("policy", "scheme", scheme_name(p.scheme)));
    p.f_start = r.take_double("policy", "f_start", p.f_start);
    p.f_k_step = r.take_double("policy", "f_k_step", p.f_k_step);
    p.n_add_max = static_cast<std::uint32_t>(r.take_u64("policy", "n_add_max", p.n_add_max));
    p.delta = static_cast<std::uint32_t>(r.take_u64("policy", "delta", p.delta));
    p.beta = r.take_double("policy", "beta", p.beta);
    p.time_budget_ms =
        static_cast<std::uint32_t>(r.take_u64("policy", "time_budget_ms", p.time_budget_ms));
    p.adaptive_round_cap = static_cast<std::uint32_t>(
        r.take_u64("policy", "adaptive_round_cap", p.adaptive_round_cap));
    p.nominal_qber = r.take_double("policy", "nominal_qber", p.nominal_qber);
    {
        std::string bands = r.take("policy", "blind_bands", "default");
        if (bands != "default") {
            for (const auto& part : split(bands, '|')) {
                auto fields = split(part, ':');
                if (fields.size() != 3)
                    throw std::invalid_argument("config: blind band needs rate:min:max");
                p.blind_bands.push_back(
                    {static_cast<int>(parse_u64(fields[0], "blind_bands")),
                     parse_double(fields[1], "blind_bands"),
                     parse_double(fields[2], "blind_bands")});
            }
        }
    }

    auto& s = c.session;
    s.frames_per_block =
        static_cast<std::uint32_t>(r.take_u64("session", "frames_per_block", s.frames_per_block));
    s.decoy_bits_per_frame = static_cast<std::uint32_t>(
        r.take_u64("session", "decoy_bits_per_frame", s.decoy_bits_per_frame));
    s.max_iters = static_cast<std::uint32_t>(r.take_u64("session", "max_iters", s.max_iters));
    s.scale_step = r.take_double("session", "scale_step", s.scale_step);
    s.llr_saturation = r.take_double("session", "llr_saturation", s.llr_saturation);
    s.shared_seed = r.take_u64("session", "shared_seed", s.shared_seed);
    s.private_seed = r.take_u64("session", "private_seed", s.private_seed);
    s.cost_per_iteration_ms =
        r.take_double("session", "cost_per_iteration_ms", s.cost_per_iteration_ms);
    s.latency_per_message_ms =
        r.take_double("session", "latency_per_message_ms", s.latency_per_message_ms);
    s.wall_clock = r.take_bool("session", "wall_clock", s.wall_clock);

    auto& ch = c.channel;
    ch.mu = r.take_double("channel", "mu", ch.mu);
    ch.nu1 = r.take_double("channel", "nu1", ch.nu1);
    ch.nu2 = r.take_double("channel", "nu2", ch.nu2);
    ch.p_mu = r.take_double("channel", "p_mu", ch.p_mu);
    ch.p_nu1 = r.take_double("channel", "p_nu1", ch.p_nu1);
    ch.p_nu2 = r.take_double("channel", "p_nu2", ch.p_nu2);
    ch.eta = r.take_double("channel", "eta", ch.eta);
    ch.p_dc = r.take_double("channel", "p_dc", ch.p_dc);
    ch.tau_dead_us = r.take_double("channel", "tau_dead_us", ch.tau_dead_us);
    ch.p_opt = r.take_double("channel", "p_opt", ch.p_opt);
    ch.loss_db = r.take_double("channel", "loss_db", ch.loss_db);

    auto& k = c.secret;
    k.kappa1_lower = r.take_double("secret", "kappa1_lower", k.kappa1_lower);
    {
        std::string e1 = r.take("secret", "e1_upper", "auto");
        if (e1 != "auto") k.e1_upper = parse_double(e1, "secret.e1_upper");
    }
    k.e1_upper_scale = r.take_double("secret", "e1_upper_scale", k.e1_upper_scale);

    auto& sw = c.sweep;
    {
        std::string g = r.take("sweep", "qber_grid", "");
        for (const auto& v : split(g, ',')) sw.qber_grid.push_back(parse_double(v, "qber_grid"));
        g = r.take("sweep", "loss_grid_db", "");
        for (const auto& v : split(g, ','))
            sw.loss_grid_db.push_back(parse_double(v, "loss_grid_db"));
        g = r.take("sweep", "schemes", "");
        for (const auto& v : split(g, ',')) sw.schemes.push_back(scheme_from_name(v));
    }
    sw.frames_per_point = static_cast<std::uint32_t>(
        r.take_u64("sweep", "frames_per_point", sw.frames_per_point));

    r.finish();
    c.session.estimator.validate();
    c.session.policy.validate();
    c.channel.validate();
    return c;
}

inline std::string serialize_config(const Config& c) {
    using detail::fmt_double;
    std::ostringstream o;
    o << "[frame]\n";
    o << "ell_frame = " << c.session.ell_frame << "\n";
    o << "alpha = " << fmt_double(c.session.policy.alpha) << "\n\n";

    o << "[pool]\n";
    o << "matrix_dir = " << c.matrix_dir << "\n";
    if (!c.distributions_dir.empty()) o << "distributions_dir = " << c.distributions_dir << "\n";
    o << "seed = " << c.matrix_seed << "\n";
    for (const auto& [rate, t] : c.rate_thresholds)
        o << "threshold_" << rate << " = " << fmt_double(t) << "\n";
    o << "\n";

    const auto& e = c.session.estimator;
    o << "[estimator]\n";
    o << "gamma = " << fmt_double(e.gamma) << "\n";
    o << "window = " << e.window << "\n";
    o << "penalty_qber = " << fmt_double(e.penalty_qber) << "\n";
    o << "burst_sigma = " << fmt_double(e.burst_sigma) << "\n";
    o << "bootstrap_qber = " << fmt_double(e.bootstrap_qber) << "\n\n";

    const auto& p = c.session.policy;
    o << "[policy]\n";
    o << "scheme = " << scheme_name(p.scheme) << "\n";
    o << "f_start = " << fmt_double(p.f_start) << "\n";
    o << "f_k_step = " << fmt_double(p.f_k_step) << "\n";
    o << "n_add_max = " << p.n_add_max << "\n";
    o << "delta = " << p.delta << "\n";
    o << "beta = " << fmt_double(p.beta) << "\n";
    o << "time_budget_ms = " << p.time_budget_ms << "\n";
    o << "adaptive_round_cap = " << p.adaptive_round_cap << "\n";
    o << "nominal_qber = " << fmt_double(p.nominal_qber) << "\n";
    o << "blind_bands = ";
    if (p.blind_bands.empty()) {
        o << "default";
    } else {
        for (std::size_t i = 0; i < p.blind_bands.size(); ++i) {
            const auto& b = p.blind_bands[i];
            if (i) o << " | ";
            o << b.rate_x100 << ":" << fmt_double(b.qber_min) << ":" << fmt_double(b.qber_max);
        }
    }
    o << "\n\n";

    const auto& s = c.session;
    o << "[session]\n";
    o << "frames_per_block = " << s.frames_per_block << "\n";
    o << "decoy_bits_per_frame = " << s.decoy_bits_per_frame << "\n";
    o << "max_iters = " << s.max_iters << "\n";
    o << "scale_step = " << fmt_double(s.scale_step) << "\n";
    o << "llr_saturation = " << fmt_double(s.llr_saturation) << "\n";
    o << "shared_seed = " << s.shared_seed << "\n";
    o << "private_seed = " << s.private_seed << "\n";
    o << "cost_per_iteration_ms = " << fmt_double(s.cost_per_iteration_ms) << "\n";
    o << "latency_per_message_ms = " << fmt_double(s.latency_per_message_ms) << "\n";
    o << "wall_clock = " << (s.wall_clock ? "true" : "false") << "\n\n";

    const auto& ch = c.channel;
    o << "[channel]\n";
    o << "mu = " << fmt_double(ch.mu) << "\n";
    o << "nu1 = " << fmt_double(ch.nu1) << "\n";
    o << "nu2 = " << fmt_double(ch.nu2) << "\n";
    o << "p_mu = " << fmt_double(ch.p_mu) << "\n";
    o << "p_nu1 = " << fmt_double(ch.p_nu1) << "\n";
    o << "p_nu2 = " << fmt_double(ch.p_nu2) << "\n";
    o << "eta = " << fmt_double(ch.eta) << "\n";
    o << "p_dc = " << fmt_double(ch.p_dc) << "\n";
    o << "tau_dead_us = " << fmt_double(ch.tau_dead_us) << "\n";
    o << "p_opt = " << fmt_double(ch.p_opt) << "\n";
    o << "loss_db = " << fmt_double(ch.loss_db) << "\n\n";

    const auto& k = c.secret;
    o << "[secret]\n";
    o << "kappa1_lower = " << fmt_double(k.kappa1_lower) << "\n";
    o << "e1_upper = " << (std::isnan(k.e1_upper) ? "auto" : fmt_double(k.e1_upper)) << "\n";
    o << "e1_upper_scale = " << fmt_double(k.e1_upper_scale) << "\n\n";

    const auto& sw = c.sweep;
    auto join = [&](const std::vector<double>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += ", ";
            out += fmt_double(v[i]);
        }
        return out;
    };
    o << "[sweep]\n";
    if (!sw.qber_grid.empty()) o << "qber_grid = " << join(sw.qber_grid) << "\n";
    if (!sw.loss_grid_db.empty()) o << "loss_grid_db = " << join(sw.loss_grid_db) << "\n";
    if (!sw.schemes.empty()) {
        o << "schemes = ";
        for (std::size_t i = 0; i < sw.schemes.size(); ++i)
            o << (i ? ", " : "") << scheme_name(sw.schemes[i]);
        o << "\n";
    }
    o << "frames_per_point = " << sw.frames_per_point << "\n";
    return o.str();
}

inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    return parse_config(in);
}

inline void save_config(const std::filesystem::path& path, const Config& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config: " + path.string());
    out << serialize_config(c);
}

}  // namespace qrir
