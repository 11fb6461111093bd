#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "bnet/digraph.hpp"
#include "bnet/rng.hpp"

namespace testutil {

inline bnet::DiGraph random_graph(std::size_t n, double density, bnet::CounterRng& rng) {
    bnet::DiGraph g(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && rng.bernoulli(density)) g.set_edge(i, j, true);
    return g;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, bnet::CounterRng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k)
        std::swap(p[k - 1], p[rng.uniform_below(k)]);
    return p;
}

inline bnet::DiGraph graph_from_edges(
    std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> edges) {
    bnet::DiGraph g(n);
    for (auto [i, j] : edges) g.set_edge(i, j, true);
    return g;
}

} // namespace testutil
