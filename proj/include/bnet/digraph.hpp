#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace bnet {

/// Loopless directed graph on a fixed vertex set, stored as row bitsets in
/// both orientations so that edge tests, neighbourhood intersections and
/// degree lookups are O(1) / O(n/64). Mutated by one thread at a time.
class DiGraph {
public:
    explicit DiGraph(std::size_t n)
        : n_(n),
          words_((n + 63) / 64),
          out_(n * words_, 0),
          in_(n * words_, 0),
          outdeg_(n, 0),
          indeg_(n, 0) {
        if (n < 1) throw std::invalid_argument("DiGraph: vertex count must be >= 1");
    }

    std::size_t order() const noexcept { return n_; }
    std::size_t words() const noexcept { return words_; }
    std::size_t edge_count() const noexcept { return edges_; }

    bool has_edge(std::size_t i, std::size_t j) const {
        check_pair(i, j);
        return (out_[i * words_ + j / 64] >> (j % 64)) & 1u;
    }

    /// Sets the (i,j) edge state; no-op when already in that state.
    void set_edge(std::size_t i, std::size_t j, bool present) {
        check_pair(i, j);
        const std::uint64_t obit = std::uint64_t{1} << (j % 64);
        std::uint64_t& oword = out_[i * words_ + j / 64];
        if (static_cast<bool>(oword & obit) == present) return;
        const std::uint64_t ibit = std::uint64_t{1} << (i % 64);
        std::uint64_t& iword = in_[j * words_ + i / 64];
        if (present) {
            oword |= obit;
            iword |= ibit;
            ++outdeg_[i];
            ++indeg_[j];
            ++edges_;
        } else {
            oword &= ~obit;
            iword &= ~ibit;
            --outdeg_[i];
            --indeg_[j];
            --edges_;
        }
    }

    std::size_t out_degree(std::size_t v) const { check_vertex(v); return outdeg_[v]; }
    std::size_t in_degree(std::size_t v) const { check_vertex(v); return indeg_[v]; }

    /// Bit k of out_row(v) is the (v,k) edge.
    std::span<const std::uint64_t> out_row(std::size_t v) const {
        return {out_.data() + v * words_, words_};
    }
    /// Bit k of in_row(v) is the (k,v) edge.
    std::span<const std::uint64_t> in_row(std::size_t v) const {
        return {in_.data() + v * words_, words_};
    }

    bool operator==(const DiGraph& other) const noexcept {
        return n_ == other.n_ && out_ == other.out_;
    }

private:
    void check_vertex(std::size_t v) const {
        if (v >= n_) throw std::invalid_argument("DiGraph: vertex out of range");
    }
    void check_pair(std::size_t i, std::size_t j) const {
        check_vertex(i);
        check_vertex(j);
        if (i == j) throw std::invalid_argument("DiGraph: self-loops are not allowed");
    }

    std::size_t n_;
    std::size_t words_;
    std::vector<std::uint64_t> out_;
    std::vector<std::uint64_t> in_;
    std::vector<std::uint32_t> outdeg_;
    std::vector<std::uint32_t> indeg_;
    std::size_t edges_ = 0;
};

inline std::size_t popcount_and(std::span<const std::uint64_t> a,
                                std::span<const std::uint64_t> b) noexcept {
    std::size_t c = 0;
    for (std::size_t w = 0; w < a.size(); ++w) c += std::popcount(a[w] & b[w]);
    return c;
}

/// Image of g under a vertex permutation: edge (i,j) maps to (perm[i], perm[j]).
inline DiGraph relabel(const DiGraph& g, std::span<const std::size_t> perm) {
    if (perm.size() != g.order())
        throw std::invalid_argument("relabel: permutation size mismatch");
    DiGraph out(g.order());
    for (std::size_t i = 0; i < g.order(); ++i)
        for (std::size_t j = 0; j < g.order(); ++j)
            if (i != j && g.has_edge(i, j)) out.set_edge(perm[i], perm[j], true);
    return out;
}

/// Edge list with integer tie strengths, e.g. ranked friendship nominations.
struct ValuedEdgeList {
    struct Entry {
        std::size_t i;
        std::size_t j;
        unsigned strength;
    };

    std::size_t n = 0;
    unsigned levels = 1; // declared number of strength levels L
    std::vector<Entry> entries;
};

/// Binary graph at cut `s`: edge present iff recorded strength >= s.
/// Thresholds are nested: raising s can only remove edges.
inline DiGraph threshold(const ValuedEdgeList& v, unsigned s) {
    if (s < 1 || s > v.levels)
        throw std::invalid_argument("threshold: level out of range");
    DiGraph g(v.n);
    for (const auto& e : v.entries)
        if (e.strength >= s) g.set_edge(e.i, e.j, true);
    return g;
}

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Parses the edge-list text format: first significant line is the vertex
/// count, then one "i j strength" triple per line; '#' starts a comment.
/// Duplicate ordered pairs and self-loops are rejected, with line numbers.
inline ValuedEdgeList read_edge_list(std::string_view text) {
    ValuedEdgeList v;
    bool have_n = false;
    std::unordered_set<std::uint64_t> seen;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    unsigned max_strength = 1;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(
            pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        std::istringstream ss{std::string(line)};
        if (!have_n) {
            long long n = -1;
            if (!(ss >> n)) throw ParseError(lineno, "expected vertex count");
            std::string extra;
            if (ss >> extra) throw ParseError(lineno, "trailing tokens after vertex count");
            if (n < 1) throw ParseError(lineno, "vertex count must be >= 1");
            v.n = static_cast<std::size_t>(n);
            have_n = true;
            continue;
        }
        long long i = 0, j = 0, s = 0;
        if (!(ss >> i >> j >> s)) throw ParseError(lineno, "expected 'i j strength'");
        std::string extra;
        if (ss >> extra) throw ParseError(lineno, "trailing tokens");
        if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= v.n ||
            static_cast<std::size_t>(j) >= v.n)
            throw ParseError(lineno, "vertex out of range");
        if (i == j) throw ParseError(lineno, "self-loop");
        if (s < 1) throw ParseError(lineno, "strength must be a positive integer");
        const std::uint64_t kk = static_cast<std::uint64_t>(i) * v.n +
                                 static_cast<std::uint64_t>(j);
        if (!seen.insert(kk).second) throw ParseError(lineno, "duplicate ordered pair");
        v.entries.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                             static_cast<unsigned>(s)});
        max_strength = std::max(max_strength, static_cast<unsigned>(s));
    }
    if (!have_n) throw ParseError(lineno, "missing vertex count");
    v.levels = max_strength;
    return v;
}

/// Canonical text form: header line, then entries sorted by (i, j).
inline std::string write_edge_list(const ValuedEdgeList& v) {
    ValuedEdgeList sorted = v;
    std::sort(sorted.entries.begin(), sorted.entries.end(),
              [](const auto& a, const auto& b) {
                  return a.i != b.i ? a.i < b.i : a.j < b.j;
              });
    std::string out = std::to_string(sorted.n) + "\n";
    for (const auto& e : sorted.entries) {
        out += std::to_string(e.i);
        out += ' ';
        out += std::to_string(e.j);
        out += ' ';
        out += std::to_string(e.strength);
        out += '\n';
    }
    return out;
}

/// Binary edge list (strength 1) of a graph, e.g. for writing sampler draws.
inline ValuedEdgeList to_valued(const DiGraph& g) {
    ValuedEdgeList v;
    v.n = g.order();
    v.levels = 1;
    for (std::size_t i = 0; i < g.order(); ++i)
        for (std::size_t j = 0; j < g.order(); ++j)
            if (i != j && g.has_edge(i, j)) v.entries.push_back({i, j, 1});
    return v;
}

} // namespace bnet
