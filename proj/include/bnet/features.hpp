#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "bnet/digraph.hpp"
#include "bnet/logistic5.hpp"

namespace bnet {

// ---------------------------------------------------------------------------
// Feature schema
// ---------------------------------------------------------------------------

inline constexpr std::size_t kFeatureCount = 35;

/// Fixed feature order shared by the CSV format, trained models and reports.
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "Den",       "EdgeRecip", "Trans",        //
    "T003",      "T012",      "T102",      "T021D", "T021U", "T021C",
    "T111D",     "T111U",     "T030T",     "T030C", "T201",  "T120D",
    "T120U",     "T120C",     "T210",      "T300",              //
    "NMeanSqOD", "NMeanSqID", "NMeanIODProd", "FracIsol",       //
    "SSMin",     "SS2",       "SS3",       "SS4",   "SS5",      //
    "SimmDen",   "MeanCore",  "SDCore",                         //
    "SV2v1",     "SV3v2",     "SV4v3",     "SVFrLg"};

enum FeatureIndex : std::size_t {
    kDen = 0,
    kEdgeRecip,
    kTrans,
    kT003,
    kT012,
    kT102,
    kT021D,
    kT021U,
    kT021C,
    kT111D,
    kT111U,
    kT030T,
    kT030C,
    kT201,
    kT120D,
    kT120U,
    kT120C,
    kT210,
    kT300,
    kNMeanSqOD,
    kNMeanSqID,
    kNMeanIODProd,
    kFracIsol,
    kSSMin,
    kSS2,
    kSS3,
    kSS4,
    kSS5,
    kSimmDen,
    kMeanCore,
    kSDCore,
    kSV2v1,
    kSV3v2,
    kSV4v3,
    kSVFrLg,
};

inline std::size_t feature_index(std::string_view name) {
    for (std::size_t k = 0; k < kFeatureCount; ++k)
        if (name == kFeatureNames[k]) return k;
    throw std::invalid_argument("unknown feature name: " + std::string(name));
}

/// Summary-statistic vector in schema order, plus fit diagnostics.
struct FeatureVector {
    std::array<double, kFeatureCount> values{};
    bool ss_fallback = false; ///< structure statistics were constant
    double ss_rss = 0.0;      ///< residual of the logistic compression

    double operator[](std::size_t k) const { return values[k]; }
};

// ---------------------------------------------------------------------------
// Graph-level indices
// ---------------------------------------------------------------------------

struct GraphLevelIndices {
    double density = 0.0;
    double edge_reciprocity = 1.0; ///< vacuously 1 on the empty graph
    double transitivity = 1.0;     ///< vacuously 1 without any 2-path
};

inline GraphLevelIndices graph_level_indices(const DiGraph& g) {
    const std::size_t n = g.order();
    GraphLevelIndices out;
    out.density = static_cast<double>(g.edge_count()) /
                  (static_cast<double>(n) * (n - 1));
    std::size_t mutual_ordered = 0;
    std::size_t paths = 0, closed = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mutual_ordered += popcount_and(g.out_row(i), g.in_row(i));
        const auto row = g.out_row(i);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || !((row[j / 64] >> (j % 64)) & 1u)) continue;
            paths += g.out_degree(j) - (g.has_edge(j, i) ? 1 : 0);
            closed += popcount_and(g.out_row(i), g.out_row(j));
        }
    }
    if (g.edge_count() > 0)
        out.edge_reciprocity =
            static_cast<double>(mutual_ordered) / static_cast<double>(g.edge_count());
    if (paths > 0)
        out.transitivity = static_cast<double>(closed) / static_cast<double>(paths);
    return out;
}

// ---------------------------------------------------------------------------
// Triad census
// ---------------------------------------------------------------------------

namespace detail {

// Bit layout of a triple's edge code on local vertices {0,1,2}.
constexpr int triad_bit(int a, int b) {
    constexpr int idx[3][3] = {{-1, 0, 2}, {1, -1, 4}, {3, 5, -1}};
    return idx[a][b];
}

/// 64-entry code-to-class table, generated from one representative per
/// isomorphism class closed over all six vertex relabelings.
constexpr std::array<std::uint8_t, 64> make_triad_table() {
    // representative edge lists, indexed by class in census order
    struct Rep {
        int edges[6][2];
        int count;
    };
    constexpr Rep reps[16] = {
        {{}, 0},                                                // 003
        {{{0, 1}}, 1},                                          // 012
        {{{0, 1}, {1, 0}}, 2},                                  // 102
        {{{1, 0}, {1, 2}}, 2},                                  // 021D
        {{{0, 1}, {2, 1}}, 2},                                  // 021U
        {{{0, 1}, {1, 2}}, 2},                                  // 021C
        {{{0, 1}, {1, 0}, {2, 1}}, 3},                          // 111D
        {{{0, 1}, {1, 0}, {1, 2}}, 3},                          // 111U
        {{{0, 1}, {2, 1}, {0, 2}}, 3},                          // 030T
        {{{1, 0}, {2, 1}, {0, 2}}, 3},                          // 030C
        {{{0, 1}, {1, 0}, {1, 2}, {2, 1}}, 4},                  // 201
        {{{1, 0}, {1, 2}, {0, 2}, {2, 0}}, 4},                  // 120D
        {{{0, 1}, {2, 1}, {0, 2}, {2, 0}}, 4},                  // 120U
        {{{0, 1}, {1, 2}, {0, 2}, {2, 0}}, 4},                  // 120C
        {{{0, 1}, {1, 2}, {2, 1}, {0, 2}, {2, 0}}, 5},          // 210
        {{{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}}, 6},  // 300
    };
    constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                 {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    std::array<std::uint8_t, 64> table{};
    std::array<bool, 64> assigned{};
    for (int cls = 0; cls < 16; ++cls) {
        for (const auto& p : perms) {
            int code = 0;
            for (int e = 0; e < reps[cls].count; ++e)
                code |= 1 << triad_bit(p[reps[cls].edges[e][0]], p[reps[cls].edges[e][1]]);
            if (assigned[code] && table[code] != cls)
                throw "triad table collision";
            table[code] = static_cast<std::uint8_t>(cls);
            assigned[code] = true;
        }
    }
    for (int code = 0; code < 64; ++code)
        if (!assigned[code]) throw "triad table gap";
    return table;
}

inline constexpr std::array<std::uint8_t, 64> kTriadTable = make_triad_table();

} // namespace detail

/// Counts of unordered vertex triples by isomorphism class, divided by
/// C(n,3), in the order 003,012,102,021D,021U,021C,111D,111U,030T,030C,
/// 201,120D,120U,120C,210,300.
inline std::array<double, 16> triad_census(const DiGraph& g) {
    const std::size_t n = g.order();
    if (n < 3) throw std::invalid_argument("triad_census: need n >= 3");
    std::array<std::uint64_t, 16> counts{};
    for (std::size_t i = 0; i + 2 < n; ++i) {
        const auto oi = g.out_row(i);
        for (std::size_t j = i + 1; j + 1 < n; ++j) {
            const auto oj = g.out_row(j);
            const unsigned ij = (oi[j / 64] >> (j % 64)) & 1u;
            const unsigned ji = (oj[i / 64] >> (i % 64)) & 1u;
            const unsigned base = ij | (ji << 1);
            for (std::size_t k = j + 1; k < n; ++k) {
                const auto ok = g.out_row(k);
                unsigned code = base;
                code |= ((oi[k / 64] >> (k % 64)) & 1u) << 2;
                code |= ((ok[i / 64] >> (i % 64)) & 1u) << 3;
                code |= ((oj[k / 64] >> (k % 64)) & 1u) << 4;
                code |= ((ok[j / 64] >> (j % 64)) & 1u) << 5;
                ++counts[detail::kTriadTable[code]];
            }
        }
    }
    const double total = static_cast<double>(n) * (n - 1) * (n - 2) / 6.0;
    std::array<double, 16> out;
    for (int c = 0; c < 16; ++c) out[c] = static_cast<double>(counts[c]) / total;
    return out;
}

// ---------------------------------------------------------------------------
// Degree statistics
// ---------------------------------------------------------------------------

struct DegreeStatistics {
    double norm_mean_sq_outdeg = 0.0;
    double norm_mean_sq_indeg = 0.0;
    double norm_mean_inout_product = 0.0;
    double isolate_fraction = 0.0;
};

inline DegreeStatistics degree_statistics(const DiGraph& g) {
    const std::size_t n = g.order();
    const double denom = static_cast<double>(n - 1) * (n - 1);
    DegreeStatistics out;
    double od2 = 0.0, id2 = 0.0, prod = 0.0;
    std::size_t isolates = 0;
    for (std::size_t v = 0; v < n; ++v) {
        const double od = static_cast<double>(g.out_degree(v));
        const double id = static_cast<double>(g.in_degree(v));
        od2 += od * od;
        id2 += id * id;
        prod += od * id;
        if (od == 0.0 && id == 0.0) ++isolates;
    }
    out.norm_mean_sq_outdeg = od2 / n / denom;
    out.norm_mean_sq_indeg = id2 / n / denom;
    out.norm_mean_inout_product = prod / n / denom;
    out.isolate_fraction = static_cast<double>(isolates) / n;
    return out;
}

// ---------------------------------------------------------------------------
// Structure statistics and their logistic compression
// ---------------------------------------------------------------------------

/// F(x) = expected fraction of vertices within directed distance x of a
/// uniformly chosen seed (the seed itself included, so F(0) = 1/n).
inline std::vector<double> structure_statistics(const DiGraph& g) {
    const std::size_t n = g.order();
    const std::size_t words = g.words();
    std::vector<double> total(n, 0.0);
    std::vector<std::uint64_t> visited(words), frontier(words), next(words);
    for (std::size_t seed = 0; seed < n; ++seed) {
        std::fill(visited.begin(), visited.end(), 0);
        std::fill(frontier.begin(), frontier.end(), 0);
        visited[seed / 64] |= std::uint64_t{1} << (seed % 64);
        frontier[seed / 64] |= std::uint64_t{1} << (seed % 64);
        std::size_t reached = 1;
        total[0] += 1.0;
        for (std::size_t x = 1; x < n; ++x) {
            bool grew = false;
            std::fill(next.begin(), next.end(), 0);
            for (std::size_t w = 0; w < words; ++w) {
                std::uint64_t bits = frontier[w];
                while (bits) {
                    const std::size_t v = w * 64 + std::countr_zero(bits);
                    bits &= bits - 1;
                    const auto row = g.out_row(v);
                    for (std::size_t q = 0; q < words; ++q) next[q] |= row[q];
                }
            }
            for (std::size_t q = 0; q < words; ++q) {
                next[q] &= ~visited[q];
                if (next[q]) grew = true;
                visited[q] |= next[q];
                reached += std::popcount(next[q]);
            }
            total[x] += static_cast<double>(reached);
            if (!grew) {
                for (std::size_t y = x + 1; y < n; ++y)
                    total[y] += static_cast<double>(reached);
                break;
            }
            frontier.swap(next);
        }
    }
    const double scale = static_cast<double>(n) * n;
    for (auto& v : total) v /= scale;
    return total;
}

// ---------------------------------------------------------------------------
// Cohesion statistics
// ---------------------------------------------------------------------------

struct CohesionStatistics {
    double simmelian_density = 0.0;
    double mean_core = 0.0;
    double sd_core = 0.0;
};

/// Core numbers by iterative peeling on total (in+out) degree.
inline std::vector<std::size_t> core_numbers(const DiGraph& g) {
    const std::size_t n = g.order();
    std::vector<std::size_t> deg(n), core(n, 0);
    std::vector<bool> removed(n, false);
    for (std::size_t v = 0; v < n; ++v) deg[v] = g.out_degree(v) + g.in_degree(v);
    std::size_t level = 0;
    for (std::size_t pass = 0; pass < n; ++pass) {
        std::size_t pick = n;
        for (std::size_t v = 0; v < n; ++v)
            if (!removed[v] && (pick == n || deg[v] < deg[pick])) pick = v;
        level = std::max(level, deg[pick]);
        core[pick] = level;
        removed[pick] = true;
        for (std::size_t u = 0; u < n; ++u) {
            if (removed[u] || u == pick) continue;
            std::size_t between = 0;
            if (g.has_edge(pick, u)) ++between;
            if (g.has_edge(u, pick)) ++between;
            deg[u] -= between;
        }
    }
    return core;
}

inline CohesionStatistics cohesion_statistics(const DiGraph& g) {
    const std::size_t n = g.order();
    const std::size_t words = g.words();
    CohesionStatistics out;

    // Simmelian ties: mutual dyads embedded in at least one mutual triangle.
    std::vector<std::uint64_t> mut(n * words);
    for (std::size_t v = 0; v < n; ++v) {
        const auto o = g.out_row(v);
        const auto i = g.in_row(v);
        for (std::size_t w = 0; w < words; ++w) mut[v * words + w] = o[w] & i[w];
    }
    std::size_t simmelian = 0;
    for (std::size_t a = 0; a < n; ++a) {
        std::uint64_t const* ma = mut.data() + a * words;
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b || !((ma[b / 64] >> (b % 64)) & 1u)) continue;
            std::uint64_t const* mb = mut.data() + b * words;
            for (std::size_t w = 0; w < words; ++w)
                if (ma[w] & mb[w]) {
                    ++simmelian;
                    break;
                }
        }
    }
    out.simmelian_density = static_cast<double>(simmelian) /
                            (static_cast<double>(n) * (n - 1));

    const auto core = core_numbers(g);
    double mean = 0.0;
    for (const auto c : core) mean += static_cast<double>(c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto c : core) {
        const double d = static_cast<double>(c) - mean;
        var += d * d;
    }
    out.mean_core = mean;
    out.sd_core = std::sqrt(var / static_cast<double>(n));
    return out;
}

// ---------------------------------------------------------------------------
// Spectral statistics
// ---------------------------------------------------------------------------

/// Singular values of the adjacency matrix, descending.
inline std::vector<double> singular_values(const DiGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.order());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && g.has_edge(static_cast<std::size_t>(i),
                                     static_cast<std::size_t>(j)))
                a(i, j) = 1.0;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    return {sv.data(), sv.data() + sv.size()};
}

struct SpectralStatistics {
    double sv2v1 = 0.0;
    double sv3v2 = 0.0;
    double sv4v3 = 0.0;
    double frac_large = 0.0;
};

/// Ratios of consecutive square-rooted singular values, and the fraction of
/// square-rooted singular values above 1/n.
inline SpectralStatistics spectral_statistics(const DiGraph& g) {
    const auto sv = singular_values(g);
    const std::size_t n = sv.size();
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) r[k] = std::sqrt(sv[k]);
    SpectralStatistics out;
    auto ratio = [&](std::size_t i) { // r_{i+1} / r_i, 1-based i
        if (i >= n || r[i - 1] < 1e-12) return 0.0;
        return r[i] / r[i - 1];
    };
    out.sv2v1 = ratio(1);
    out.sv3v2 = ratio(2);
    out.sv4v3 = ratio(3);
    std::size_t large = 0;
    for (const double v : r)
        if (v > 1.0 / static_cast<double>(n)) ++large;
    out.frac_large = static_cast<double>(large) / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Full feature vector
// ---------------------------------------------------------------------------

inline FeatureVector featurize(const DiGraph& g) {
    if (g.order() < 3) throw std::invalid_argument("featurize: need n >= 3");
    FeatureVector fv;
    auto& v = fv.values;

    const auto gl = graph_level_indices(g);
    v[kDen] = gl.density;
    v[kEdgeRecip] = gl.edge_reciprocity;
    v[kTrans] = gl.transitivity;

    const auto census = triad_census(g);
    for (std::size_t c = 0; c < census.size(); ++c) v[kT003 + c] = census[c];

    const auto ds = degree_statistics(g);
    v[kNMeanSqOD] = ds.norm_mean_sq_outdeg;
    v[kNMeanSqID] = ds.norm_mean_sq_indeg;
    v[kNMeanIODProd] = ds.norm_mean_inout_product;
    v[kFracIsol] = ds.isolate_fraction;

    const auto ss = structure_statistics(g);
    const auto fit = fit_logistic5(ss);
    v[kSSMin] = fit.gamma1;
    v[kSS2] = fit.gamma2;
    v[kSS3] = fit.gamma3;
    v[kSS4] = fit.gamma4;
    v[kSS5] = fit.gamma5;
    fv.ss_fallback = fit.fallback;
    fv.ss_rss = fit.rss;

    const auto coh = cohesion_statistics(g);
    v[kSimmDen] = coh.simmelian_density;
    v[kMeanCore] = coh.mean_core;
    v[kSDCore] = coh.sd_core;

    const auto sp = spectral_statistics(g);
    v[kSV2v1] = sp.sv2v1;
    v[kSV3v2] = sp.sv3v2;
    v[kSV4v3] = sp.sv4v3;
    v[kSVFrLg] = sp.frac_large;
    return fv;
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

inline std::string feature_csv_header() {
    std::string out;
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        if (k) out += ',';
        out += kFeatureNames[k];
    }
    out += '\n';
    return out;
}

inline void append_csv_value(std::string& out, double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out += buf;
}

inline void append_feature_csv_row(std::string& out, const FeatureVector& fv) {
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
        if (k) out += ',';
        append_csv_value(out, fv.values[k]);
    }
    out += '\n';
}

} // namespace bnet
