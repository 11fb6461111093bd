#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bnet/digraph.hpp"
#include "bnet/parallel.hpp"
#include "bnet/rng.hpp"

namespace bnet {

/// Bias-event probabilities: pi (reciprocation), sigma (incoming shared
/// partner), rho (their co-occurrence), d (baseline formation), delta
/// (satiation, inhibitory).
struct Params {
    double pi = 0.0;
    double sigma = 0.0;
    double rho = 0.0;
    double d = 0.0;
    double delta = 0.0;

    void validate() const {
        for (double v : {pi, sigma, rho, d, delta})
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("Params: probabilities must lie in [0,1]");
    }
};

/// Which event types are active, whether closure statistics are truncated at
/// one event, and the graph order the process runs on.
struct ModelSpec {
    std::size_t n = 0;
    bool dichotomized = false;
    bool use_baseline = true;
    bool use_parent = true;
    bool use_sibling = true;
    bool use_droles = true;
    bool use_satiation = true;

    void validate() const {
        if (n < 2) throw std::invalid_argument("ModelSpec: graph order must be >= 2");
    }
};

/// Counts of potential bias events for one focal ordered pair, computed on
/// the graph with that pair's own edge excluded.
struct EventCounts {
    std::uint32_t t_const = 1;
    std::uint32_t t_parent = 0;
    std::uint32_t t_sibling = 0;
    std::uint32_t t_droles = 0;
    std::uint32_t w_satiation = 0;
};

/// Evaluates the event statistics for focal pair (i,j):
///   t_parent    — reciprocating edge (j,i)
///   t_sibling   — vertices sending to both i and j (capped at 1 if dichotomized)
///   t_droles    — t_parent times the (possibly capped) shared-partner count
///   w_satiation — edges i sends to vertices other than j
inline EventCounts event_counts(const DiGraph& g, std::size_t i, std::size_t j,
                                const ModelSpec& spec) {
    if (i == j || i >= g.order() || j >= g.order())
        throw std::invalid_argument("event_counts: need distinct in-range vertices");
    EventCounts c;
    c.t_const = spec.use_baseline ? 1 : 0;
    const bool need_recip = spec.use_parent || spec.use_droles;
    const bool need_shared = spec.use_sibling || spec.use_droles;
    std::uint32_t recip = 0;
    if (need_recip) {
        const auto row = g.out_row(j);
        recip = (row[i / 64] >> (i % 64)) & 1u;
    }
    std::uint32_t shared = 0;
    if (need_shared) {
        // In-neighbourhood intersection; i and j themselves can never appear
        // because that would require a self-loop.
        shared = static_cast<std::uint32_t>(popcount_and(g.in_row(i), g.in_row(j)));
        if (spec.dichotomized && shared > 1) shared = 1;
    }
    if (spec.use_parent) c.t_parent = recip;
    if (spec.use_sibling) c.t_sibling = shared;
    if (spec.use_droles) c.t_droles = recip * shared;
    if (spec.use_satiation) {
        const auto row = g.out_row(i);
        const std::uint32_t has_ij = (row[j / 64] >> (j % 64)) & 1u;
        c.w_satiation = static_cast<std::uint32_t>(g.out_degree(i)) - has_ij;
    }
    return c;
}

namespace detail {

/// Failure probabilities of one event type raised to small integer powers.
/// Powers are prefix products, so a value never depends on the table length;
/// beyond the direct-product limit the evaluation switches to log space.
struct FailurePowers {
    static constexpr std::uint32_t kDirectLimit = 64;

    explicit FailurePowers(double success, std::size_t max_count = kDirectLimit)
        : fail(1.0 - success) {
        const std::size_t len =
            std::min<std::size_t>(max_count, kDirectLimit) + 1;
        table.resize(len);
        table[0] = 1.0;
        for (std::size_t k = 1; k < len; ++k) table[k] = table[k - 1] * fail;
    }

    double pow(std::uint32_t t) const {
        if (t < table.size()) return table[t];
        if (t <= kDirectLimit) {
            double acc = table.back();
            for (std::uint32_t k = static_cast<std::uint32_t>(table.size()) - 1;
                 k < t; ++k)
                acc *= fail;
            return acc;
        }
        if (fail <= 0.0) return 0.0;
        return std::exp(static_cast<double>(t) * std::log(fail));
    }

    double fail;
    std::vector<double> table;
};

} // namespace detail

/// Edge-update probability evaluator for fixed parameters. Holding one per
/// chain amortizes the power tables; results are bit-identical to
/// update_probability() on the same counts.
class UpdateProbability {
public:
    explicit UpdateProbability(const Params& psi,
                               std::size_t max_count = detail::FailurePowers::kDirectLimit)
        : pi_(psi.pi, max_count),
          sigma_(psi.sigma, max_count),
          rho_(psi.rho, max_count),
          fail_d_(1.0 - psi.d),
          fail_delta_(1.0 - psi.delta) {
        psi.validate();
    }

    /// P = (1-delta)^w * [1 - (1-d)^{t_const} (1-pi)^{t_parent}
    ///                        (1-sigma)^{t_sibling} (1-rho)^{t_droles}].
    /// The inhibition factor is applied one multiply per event, so raising w
    /// by one scales the result by exactly (1-delta).
    double operator()(const EventCounts& c) const {
        double miss = c.t_const ? fail_d_ : 1.0;
        miss *= pi_.pow(c.t_parent);
        miss *= sigma_.pow(c.t_sibling);
        miss *= rho_.pow(c.t_droles);
        double p = 1.0 - miss;
        if (c.w_satiation != 0) {
            if (c.w_satiation <= detail::FailurePowers::kDirectLimit) {
                for (std::uint32_t k = 0; k < c.w_satiation; ++k) p *= fail_delta_;
            } else if (fail_delta_ <= 0.0) {
                p = 0.0;
            } else {
                p *= std::exp(static_cast<double>(c.w_satiation) *
                              std::log(fail_delta_));
            }
        }
        return p;
    }

private:
    detail::FailurePowers pi_;
    detail::FailurePowers sigma_;
    detail::FailurePowers rho_;
    double fail_d_;
    double fail_delta_;
};

/// Probability that the focal edge is (re)formed: at least one formation
/// event fires while every inhibitory event fails.
inline double update_probability(const EventCounts& c, const Params& psi) {
    const std::uint32_t mx =
        std::max({c.t_parent, c.t_sibling, c.t_droles, std::uint32_t{1}});
    return UpdateProbability(psi, mx)(c);
}

/// One update with everything injected: pair choice and uniform deviate.
/// The chosen edge is set (not toggled) — an existing edge survives only if
/// it re-fires.
inline void apply_update(DiGraph& g, std::size_t i, std::size_t j, double u,
                         const ModelSpec& spec, const UpdateProbability& prob) {
    const EventCounts c = event_counts(g, i, j, spec);
    g.set_edge(i, j, u < prob(c));
}

/// One step of the biased-net Markov process: a uniformly chosen ordered
/// pair is resampled from its conditional formation probability.
inline void step(DiGraph& g, const ModelSpec& spec, const UpdateProbability& prob,
                 CounterRng& rng) {
    const std::size_t n = g.order();
    const std::uint64_t r = rng.uniform_below(static_cast<std::uint64_t>(n) * (n - 1));
    const std::size_t i = static_cast<std::size_t>(r / (n - 1));
    const std::size_t rem = static_cast<std::size_t>(r % (n - 1));
    const std::size_t j = rem + (rem >= i ? 1 : 0);
    apply_update(g, i, j, rng.uniform01(), spec, prob);
}

/// Runs the process for `burnin` steps and returns the final state. Starts
/// from the empty graph unless an initial state is supplied.
inline DiGraph sample_network(const Params& psi, const ModelSpec& spec,
                              std::uint64_t burnin, CounterRng& rng,
                              const DiGraph* initial = nullptr) {
    psi.validate();
    spec.validate();
    if (initial && initial->order() != spec.n)
        throw std::invalid_argument("sample_network: initial state order mismatch");
    const bool empty_start = !initial || initial->edge_count() == 0;
    const double base = spec.use_baseline ? psi.d : 0.0;
    if (empty_start && base <= 0.0)
        throw std::invalid_argument(
            "sample_network: d=0 makes the empty graph an absorbing state");
    DiGraph g = initial ? *initial : DiGraph(spec.n);
    const UpdateProbability prob(psi, spec.n);
    for (std::uint64_t t = 0; t < burnin; ++t) step(g, spec, prob, rng);
    return g;
}

/// Independent draws, one chain per draw; draw k uses substream (key, k), so
/// any thread layout yields the same batch.
inline std::vector<DiGraph> sample_batch(const Params& psi, const ModelSpec& spec,
                                         std::uint64_t burnin, std::uint64_t key,
                                         std::size_t count, unsigned threads = 0) {
    std::vector<DiGraph> out(count, DiGraph(spec.n));
    parallel_for(count, threads, [&](std::size_t k) {
        CounterRng rng(derive_key(key, k));
        out[k] = sample_network(psi, spec, burnin, rng);
    });
    return out;
}

/// The two closed forms the conditional specification implies for the same
/// marginal edge probability; they disagree whenever sigma > 0, which is the
/// counterexample showing that specification is not realizable.
inline std::pair<double, double> illposed_marginals(double d, double sigma) {
    if (!(d > 0.0 && d < 1.0) || !(sigma >= 0.0 && sigma < 1.0))
        throw std::invalid_argument("illposed_marginals: need 0<d<1 and 0<=sigma<1");
    const double both = d + sigma - d * sigma;
    const double m1 = d * both / (d + sigma * (1.0 - d) * (1.0 - d));
    return {m1, both};
}

} // namespace bnet
