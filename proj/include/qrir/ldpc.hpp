#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qrir/bits.hpp"
#include "qrir/crc32.hpp"
#include "qrir/math.hpp"
#include "qrir/rng.hpp"

namespace qrir {

// ============================================================================
// Variable-node degree distributions (node perspective)
// ============================================================================

struct DegreeDistribution {
    // (degree, fraction of nodes), sorted by degree.  The check side is
    // optional: when present its degrees act as per-row targets during
    // construction; when empty PEG concentrates check degrees on its own.
    std::vector<std::pair<std::uint16_t, double>> entries;
    std::vector<std::pair<std::uint16_t, double>> check_entries;

    static void validate_list(const std::vector<std::pair<std::uint16_t, double>>& list) {
        if (list.empty())
            throw std::invalid_argument("degree distribution: empty");
        double sum = 0.0;
        std::uint16_t prev = 0;
        for (auto [d, f] : list) {
            if (d < 1) throw std::invalid_argument("degree distribution: degree < 1");
            if (d <= prev)
                throw std::invalid_argument("degree distribution: degrees not strictly increasing");
            if (f <= 0.0)
                throw std::invalid_argument("degree distribution: non-positive fraction");
            prev = d;
            sum += f;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("degree distribution: fractions must sum to 1");
    }

    void validate() const {
        validate_list(entries);
        if (!check_entries.empty()) validate_list(check_entries);
    }

    // Integer node counts per degree via largest-remainder rounding.
    static std::vector<std::pair<std::uint16_t, std::uint32_t>> counts_for(
        const std::vector<std::pair<std::uint16_t, double>>& list, std::uint32_t n_nodes) {
        std::vector<std::pair<std::uint16_t, std::uint32_t>> out;
        std::vector<std::pair<double, std::size_t>> rema;  // (remainder, entry idx)
        std::uint32_t assigned = 0;
        for (std::size_t i = 0; i < list.size(); ++i) {
            double exact = list[i].second * n_nodes;
            auto base = static_cast<std::uint32_t>(exact);
            out.emplace_back(list[i].first, base);
            assigned += base;
            rema.emplace_back(exact - base, i);
        }
        std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t k = 0; assigned < n_nodes; ++k, ++assigned)
            out[rema[k % rema.size()].second].second++;
        return out;
    }

    std::vector<std::pair<std::uint16_t, std::uint32_t>> counts(std::uint32_t n_cols) const {
        validate();
        return counts_for(entries, n_cols);
    }

    // Empty when no check-side profile was given.
    std::vector<std::pair<std::uint16_t, std::uint32_t>> check_counts(std::uint32_t n_rows) const {
        if (check_entries.empty()) return {};
        validate();
        return counts_for(check_entries, n_rows);
    }

    double mean_degree() const {
        double s = 0.0;
        for (auto [d, f] : entries) s += d * f;
        return s;
    }

    std::string to_text() const {
        std::ostringstream os;
        os << "# variable-node degree distribution (degree fraction)\n";
        for (auto [d, f] : entries) os << d << " " << f << "\n";
        return os.str();
    }

    static DegreeDistribution parse_text(std::istream& in) {
        DegreeDistribution dist;
        std::string line;
        while (std::getline(in, line)) {
            auto pos = line.find('#');
            if (pos != std::string::npos) line.erase(pos);
            std::istringstream ls(line);
            unsigned d;
            double f;
            if (ls >> d >> f) dist.entries.emplace_back(static_cast<std::uint16_t>(d), f);
        }
        std::sort(dist.entries.begin(), dist.entries.end());
        dist.validate();
        return dist;
    }

    static DegreeDistribution load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open distribution file: " + path.string());
        return parse_text(in);
    }
};

// Shipped profiles, one per mother-code rate (keys are rate*100).  These are
// irregular profiles in the WiMAX/DVB family, trimmed so that low-degree mass
// stays below the redundancy fraction and the average check degree stays
// moderate at high rates.
inline DegreeDistribution builtin_distribution(int rate_x100) {
    using E = std::vector<std::pair<std::uint16_t, double>>;
    static const std::map<int, E> table = {
        {50, {{2, 0.46}, {3, 0.32}, {6, 0.06}, {8, 0.16}}},
        {55, {{2, 0.42}, {3, 0.33}, {6, 0.07}, {8, 0.18}}},
        {60, {{2, 0.38}, {3, 0.34}, {6, 0.08}, {8, 0.20}}},
        {65, {{2, 0.34}, {3, 0.36}, {6, 0.09}, {8, 0.21}}},
        {70, {{2, 0.30}, {3, 0.38}, {6, 0.10}, {8, 0.22}}},
        {75, {{2, 0.27}, {3, 0.40}, {6, 0.11}, {8, 0.22}}},
        {80, {{2, 0.24}, {3, 0.44}, {6, 0.12}, {8, 0.20}}},
        {85, {{2, 0.22}, {3, 0.50}, {6, 0.13}, {8, 0.15}}},
        {90, {{2, 0.20}, {3, 0.60}, {6, 0.12}, {8, 0.08}}},
    };
    auto it = table.find(rate_x100);
    if (it == table.end())
        throw std::invalid_argument("no builtin degree distribution for rate " +
                                    std::to_string(rate_x100));
    DegreeDistribution d{it->second, {}};
    d.validate();
    return d;
}

// ============================================================================
// Parity-check matrix (sparse, CSR in both directions)
// ============================================================================

struct ParityCheckMatrix {
    std::uint32_t n_cols = 0;
    std::uint32_t n_rows = 0;
    // check -> variables
    std::vector<std::uint32_t> row_ptr;   // size n_rows+1
    std::vector<std::uint32_t> row_cols;  // size n_edges
    // variable -> checks
    std::vector<std::uint32_t> col_ptr;   // size n_cols+1
    std::vector<std::uint32_t> col_rows;  // size n_edges
    // puncture-eligible columns in selection order; filled by select_untainted
    std::vector<std::uint32_t> untainted_columns;

    std::uint32_t n_edges() const { return static_cast<std::uint32_t>(row_cols.size()); }
    std::uint32_t col_degree(std::uint32_t v) const { return col_ptr[v + 1] - col_ptr[v]; }
    std::uint32_t row_degree(std::uint32_t c) const { return row_ptr[c + 1] - row_ptr[c]; }
    double rate() const { return 1.0 - static_cast<double>(n_rows) / n_cols; }
    std::uint32_t max_punctured() const {
        return static_cast<std::uint32_t>(untainted_columns.size());
    }

    static ParityCheckMatrix from_adjacency(std::uint32_t n_cols, std::uint32_t n_rows,
                                            const std::vector<std::vector<std::uint32_t>>& var_adj) {
        ParityCheckMatrix H;
        H.n_cols = n_cols;
        H.n_rows = n_rows;
        std::vector<std::uint32_t> row_deg(n_rows, 0);
        std::uint32_t edges = 0;
        for (const auto& checks : var_adj) {
            for (auto c : checks) row_deg[c]++;
            edges += static_cast<std::uint32_t>(checks.size());
        }
        H.col_ptr.resize(n_cols + 1, 0);
        H.col_rows.reserve(edges);
        for (std::uint32_t v = 0; v < n_cols; ++v) {
            auto checks = var_adj[v];
            std::sort(checks.begin(), checks.end());
            for (auto c : checks) H.col_rows.push_back(c);
            H.col_ptr[v + 1] = static_cast<std::uint32_t>(H.col_rows.size());
        }
        H.row_ptr.resize(n_rows + 1, 0);
        for (std::uint32_t c = 0; c < n_rows; ++c) H.row_ptr[c + 1] = H.row_ptr[c] + row_deg[c];
        H.row_cols.resize(edges);
        std::vector<std::uint32_t> fill(H.row_ptr.begin(), H.row_ptr.end() - 1);
        for (std::uint32_t v = 0; v < n_cols; ++v)
            for (std::uint32_t e = H.col_ptr[v]; e < H.col_ptr[v + 1]; ++e)
                H.row_cols[fill[H.col_rows[e]]++] = v;
        return H;
    }

    void validate() const {
        if (n_cols == 0 || n_rows == 0)
            throw std::invalid_argument("matrix: empty dimensions");
        if (row_ptr.size() != n_rows + 1 || col_ptr.size() != n_cols + 1 ||
            row_cols.size() != col_rows.size())
            throw std::invalid_argument("matrix: inconsistent arrays");
        for (std::uint32_t c = 0; c < n_rows; ++c)
            if (row_degree(c) == 0) throw std::invalid_argument("matrix: empty check row");
        for (std::uint32_t v = 0; v < n_cols; ++v) {
            if (col_degree(v) == 0) throw std::invalid_argument("matrix: empty column");
            for (std::uint32_t e = col_ptr[v] + 1; e < col_ptr[v + 1]; ++e)
                if (col_rows[e] <= col_rows[e - 1])
                    throw std::invalid_argument("matrix: duplicate or unsorted edge");
        }
    }
};

inline Bits syndrome(const ParityCheckMatrix& H, const Bits& x) {
    if (x.size() != H.n_cols)
        throw std::invalid_argument("syndrome: word length != n_cols");
    Bits s(H.n_rows, 0);
    for (std::uint32_t c = 0; c < H.n_rows; ++c) {
        std::uint8_t acc = 0;
        for (std::uint32_t e = H.row_ptr[c]; e < H.row_ptr[c + 1]; ++e)
            acc ^= x[H.row_cols[e]];
        s[c] = acc;
    }
    return s;
}

// ============================================================================
// Progressive edge-growth construction
// ============================================================================

namespace detail {

// Scratch space for repeated BFS passes over the partially built graph.
struct PegScratch {
    std::vector<std::uint32_t> check_stamp, var_stamp, adj_stamp, depth_of;
    std::vector<std::uint32_t> frontier, next_frontier, new_checks;
    std::uint32_t epoch = 0;
};

// Pick the check node for the next edge of variable v.  A parallel edge is
// never created; exceeding a row's target degree (when a check-side profile
// was given) or closing a 4-cycle (graph distance 2) are last resorts, in
// that order.  Within a class: lowest current check degree, then farthest
// from v, then lowest index -- check degrees stay concentrated while the
// short cycles that actually hurt decoding are avoided wherever the graph
// allows.
inline std::uint32_t peg_choose_check(std::uint32_t v,
                                      const std::vector<std::vector<std::uint32_t>>& var_adj,
                                      const std::vector<std::vector<std::uint32_t>>& check_adj,
                                      const std::vector<std::uint32_t>& check_deg,
                                      const std::vector<std::uint32_t>& check_target,
                                      std::uint32_t n_rows, PegScratch& sc) {
    const std::uint32_t epoch = ++sc.epoch;
    for (auto c : var_adj[v]) sc.adj_stamp[c] = epoch;

    sc.var_stamp[v] = epoch;
    sc.frontier.clear();
    sc.frontier.push_back(v);
    std::uint32_t depth = 0;

    while (!sc.frontier.empty()) {
        ++depth;
        sc.new_checks.clear();
        for (auto u : sc.frontier)
            for (auto c : var_adj[u])
                if (sc.check_stamp[c] != epoch) {
                    sc.check_stamp[c] = epoch;
                    sc.depth_of[c] = depth;
                    sc.new_checks.push_back(c);
                }
        if (sc.new_checks.empty()) break;
        sc.next_frontier.clear();
        for (auto c : sc.new_checks)
            for (auto u : check_adj[c])
                if (sc.var_stamp[u] != epoch) {
                    sc.var_stamp[u] = epoch;
                    sc.next_frontier.push_back(u);
                }
        sc.frontier.swap(sc.next_frontier);
    }

    constexpr std::uint32_t kFar = ~0u;  // unreachable: no cycle at any length
    std::uint32_t best = n_rows, best_depth = 0, best_class = 0;
    for (std::uint32_t c = 0; c < n_rows; ++c) {
        if (sc.adj_stamp[c] == epoch) continue;  // already an edge of v
        const std::uint32_t d = sc.check_stamp[c] == epoch ? sc.depth_of[c] : kFar;
        std::uint32_t cls = d == 2 ? 1 : 0;
        if (!check_target.empty() && check_deg[c] >= check_target[c]) cls += 2;
        if (best == n_rows) {
            best = c;
            best_depth = d;
            best_class = cls;
            continue;
        }
        bool take;
        if (cls != best_class)
            take = cls < best_class;
        else if (check_deg[c] != check_deg[best])
            take = check_deg[c] < check_deg[best];
        else
            take = d > best_depth;  // equal: keep lower index (scan order)
        if (take) {
            best = c;
            best_depth = d;
            best_class = cls;
        }
    }
    if (best == n_rows)
        throw std::runtime_error("peg: no check available (degree exceeds n_rows?)");
    return best;
}

}  // namespace detail

// Builds an n_rows x n_cols parity-check matrix edge by edge.  The seed
// decides which columns carry which degree; the greedy placement itself is
// deterministic.
inline ParityCheckMatrix peg_construct(std::uint32_t n_cols, std::uint32_t n_rows,
                                       const DegreeDistribution& dist, std::uint64_t seed) {
    if (n_rows == 0 || n_cols == 0)
        throw std::invalid_argument("peg_construct: empty dimensions");
    auto counts = dist.counts(n_cols);
    for (auto [d, cnt] : counts)
        if (cnt > 0 && d > n_rows)
            throw std::invalid_argument("peg_construct: column degree exceeds n_rows");

    // Columns in seed-shuffled order take degrees in ascending order, so the
    // construction still processes lowest degrees first.
    SyncRng rng(derive_seed(seed, 0x9e67u));
    auto order = rng.permutation(n_cols);
    std::vector<std::uint16_t> deg_of(n_cols, 0);
    {
        std::size_t k = 0;
        for (auto [d, cnt] : counts)
            for (std::uint32_t i = 0; i < cnt; ++i) deg_of[order[k++]] = d;
    }

    // Optional row-degree targets, assigned over a separately shuffled order.
    std::vector<std::uint32_t> check_target;
    if (auto ccounts = dist.check_counts(n_rows); !ccounts.empty()) {
        SyncRng crng(derive_seed(seed, 0xc4ecu));
        auto corder = crng.permutation(n_rows);
        check_target.assign(n_rows, 0);
        std::size_t k = 0;
        for (auto [d, cnt] : ccounts)
            for (std::uint32_t i = 0; i < cnt; ++i) check_target[corder[k++]] = d;
    }

    std::vector<std::vector<std::uint32_t>> var_adj(n_cols), check_adj(n_rows);
    std::vector<std::uint32_t> check_deg(n_rows, 0);
    detail::PegScratch sc;
    sc.check_stamp.assign(n_rows, 0);
    sc.adj_stamp.assign(n_rows, 0);
    sc.depth_of.assign(n_rows, 0);
    sc.var_stamp.assign(n_cols, 0);

    for (std::uint32_t k = 0; k < n_cols; ++k) {
        const std::uint32_t v = order[k];
        const std::uint16_t d = deg_of[v];
        var_adj[v].reserve(d);
        for (std::uint16_t j = 0; j < d; ++j) {
            std::uint32_t c = detail::peg_choose_check(v, var_adj, check_adj, check_deg,
                                                       check_target, n_rows, sc);
            var_adj[v].push_back(c);
            check_adj[c].push_back(v);
            check_deg[c]++;
        }
    }

    auto H = ParityCheckMatrix::from_adjacency(n_cols, n_rows, var_adj);
    H.validate();
    return H;
}

// ============================================================================
// Untainted column selection (puncturing support)
// ============================================================================

// Greedily selects columns whose check neighbourhoods are pairwise disjoint,
// so no check equation touches two punctured symbols.  Candidates are scanned
// in ascending (degree, index) order; the returned vector preserves selection
// order.
inline std::vector<std::uint32_t> select_untainted(const ParityCheckMatrix& H) {
    std::vector<std::uint32_t> cols(H.n_cols);
    for (std::uint32_t v = 0; v < H.n_cols; ++v) cols[v] = v;
    std::stable_sort(cols.begin(), cols.end(), [&](std::uint32_t a, std::uint32_t b) {
        return H.col_degree(a) < H.col_degree(b);
    });
    std::vector<std::uint8_t> used(H.n_rows, 0);
    std::vector<std::uint32_t> picked;
    for (auto v : cols) {
        bool free = true;
        for (std::uint32_t e = H.col_ptr[v]; e < H.col_ptr[v + 1] && free; ++e)
            free = !used[H.col_rows[e]];
        if (!free) continue;
        for (std::uint32_t e = H.col_ptr[v]; e < H.col_ptr[v + 1]; ++e)
            used[H.col_rows[e]] = 1;
        picked.push_back(v);
    }
    return picked;
}

// ============================================================================
// Matrix cache files
// ============================================================================

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t x) {
    b.push_back(static_cast<std::uint8_t>(x));
    b.push_back(static_cast<std::uint8_t>(x >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}

struct ByteReader {
    const std::uint8_t* p;
    std::size_t len, off = 0;
    void need(std::size_t n) const {
        if (off + n > len) throw std::runtime_error("matrix file truncated");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t x = static_cast<std::uint16_t>(p[off] | (p[off + 1] << 8));
        off += 2;
        return x;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return x;
    }
};

}  // namespace detail

struct StoredMatrix {
    ParityCheckMatrix H;  // untainted_columns included
    std::uint16_t rate_x100 = 0;
    std::uint64_t seed = 0;
};

inline constexpr char kMatrixMagic[4] = {'Q', 'M', 'T', 'X'};
inline constexpr std::uint16_t kMatrixVersion = 1;

inline void save_matrix(const std::filesystem::path& path, const StoredMatrix& m) {
    std::vector<std::uint8_t> buf;
    buf.reserve(32 + m.H.n_cols * 2 + m.H.n_edges() * 4 + m.H.untainted_columns.size() * 4);
    buf.insert(buf.end(), kMatrixMagic, kMatrixMagic + 4);
    detail::put_u16(buf, kMatrixVersion);
    detail::put_u16(buf, m.rate_x100);
    detail::put_u32(buf, m.H.n_cols);
    detail::put_u32(buf, m.H.n_rows);
    detail::put_u32(buf, m.H.n_edges());
    detail::put_u64(buf, m.seed);
    for (std::uint32_t v = 0; v < m.H.n_cols; ++v)
        detail::put_u16(buf, static_cast<std::uint16_t>(m.H.col_degree(v)));
    for (std::uint32_t v = 0; v < m.H.n_cols; ++v)
        for (std::uint32_t e = m.H.col_ptr[v]; e < m.H.col_ptr[v + 1]; ++e)
            detail::put_u32(buf, m.H.col_rows[e]);
    detail::put_u32(buf, static_cast<std::uint32_t>(m.H.untainted_columns.size()));
    for (auto v : m.H.untainted_columns) detail::put_u32(buf, v);
    detail::put_u32(buf, crc32(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write matrix file: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline StoredMatrix load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open matrix file: " + path.string());
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 8 || !std::equal(kMatrixMagic, kMatrixMagic + 4, buf.begin()))
        throw std::runtime_error("not a matrix file: " + path.string());
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
    if (crc32(buf.data(), buf.size() - 4) != stored_crc)
        throw std::runtime_error("matrix file corrupt (crc): " + path.string());

    detail::ByteReader r{buf.data(), buf.size() - 4};
    r.off = 4;
    if (r.u16() != kMatrixVersion)
        throw std::runtime_error("unsupported matrix file version: " + path.string());
    StoredMatrix m;
    m.rate_x100 = r.u16();
    std::uint32_t n_cols = r.u32();
    std::uint32_t n_rows = r.u32();
    std::uint32_t n_edges = r.u32();
    m.seed = r.u64();
    std::vector<std::vector<std::uint32_t>> var_adj(n_cols);
    std::vector<std::uint16_t> degs(n_cols);
    for (auto& d : degs) d = r.u16();
    std::uint32_t total = 0;
    for (std::uint32_t v = 0; v < n_cols; ++v) {
        var_adj[v].resize(degs[v]);
        total += degs[v];
        for (auto& c : var_adj[v]) {
            c = r.u32();
            if (c >= n_rows) throw std::runtime_error("matrix file corrupt (row index)");
        }
    }
    if (total != n_edges) throw std::runtime_error("matrix file corrupt (edge count)");
    std::uint32_t n_unt = r.u32();
    std::vector<std::uint32_t> untainted(n_unt);
    for (auto& v : untainted) {
        v = r.u32();
        if (v >= n_cols) throw std::runtime_error("matrix file corrupt (untainted index)");
    }
    m.H = ParityCheckMatrix::from_adjacency(n_cols, n_rows, var_adj);
    m.H.untainted_columns = std::move(untainted);
    m.H.validate();
    return m;
}

// ============================================================================
// Code pool: one mother code per rate
// ============================================================================

inline constexpr std::array<int, 9> kPoolRates = {50, 55, 60, 65, 70, 75, 80, 85, 90};

inline std::uint32_t rows_for_rate(std::uint32_t n_cols, int rate_x100) {
    return static_cast<std::uint32_t>(
        (static_cast<std::uint64_t>(n_cols) * (100 - rate_x100) + 50) / 100);
}

// Highest a-priori error rate a code of rate R is trusted to handle:
// h2(t) = (1-R) / 1.05, i.e. keep a 5% margin to capacity.
inline double default_rate_threshold(int rate_x100) {
    return binary_entropy_inv((1.0 - rate_x100 / 100.0) / 1.05);
}

class CodePool {
  public:
    struct Entry {
        ParityCheckMatrix H;
        double threshold = 0.0;
    };

    std::uint32_t frame_len = 0;
    std::uint64_t seed = 0;
    std::map<int, Entry> codes;  // rate*100 -> entry, ascending

    const Entry& at(int rate_x100) const {
        auto it = codes.find(rate_x100);
        if (it == codes.end())
            throw std::out_of_range("pool has no rate " + std::to_string(rate_x100));
        return it->second;
    }

    std::uint32_t max_puncture(int rate_x100) const {
        return at(rate_x100).H.max_punctured();
    }

    static std::string cache_name(int rate_x100, std::uint32_t n_cols, std::uint64_t seed) {
        std::ostringstream os;
        os << "H_r" << rate_x100 << "_n" << n_cols << "_s" << std::hex << seed << ".qmtx";
        return os.str();
    }

    using DistProvider = std::function<DegreeDistribution(int rate_x100)>;

    // Loads cached matrices from dir, constructing and caching any that are
    // missing.  Progress callback (may be null) gets (rate_x100, was_cached).
    static CodePool build(const std::filesystem::path& dir, std::uint32_t frame_len,
                          std::uint64_t seed, const DistProvider& dist = builtin_distribution,
                          const std::map<int, double>& thresholds = {},
                          const std::function<void(int, bool)>& progress = nullptr) {
        std::filesystem::create_directories(dir);
        CodePool pool;
        pool.frame_len = frame_len;
        pool.seed = seed;
        for (int r : kPoolRates) {
            const auto path = dir / cache_name(r, frame_len, seed);
            StoredMatrix m;
            bool cached = std::filesystem::exists(path);
            if (cached) {
                m = load_matrix(path);
                if (m.rate_x100 != r || m.H.n_cols != frame_len)
                    throw std::runtime_error("matrix cache mismatch: " + path.string());
            } else {
                m.rate_x100 = static_cast<std::uint16_t>(r);
                m.seed = derive_seed(seed, static_cast<std::uint64_t>(r));
                m.H = peg_construct(frame_len, rows_for_rate(frame_len, r), dist(r), m.seed);
                m.H.untainted_columns = select_untainted(m.H);
                save_matrix(path, m);
            }
            if (progress) progress(r, cached);
            Entry e;
            e.H = std::move(m.H);
            auto it = thresholds.find(r);
            e.threshold = it != thresholds.end() ? it->second : default_rate_threshold(r);
            pool.codes.emplace(r, std::move(e));
        }
        return pool;
    }
};

}  // namespace qrir
