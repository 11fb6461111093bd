#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace bnet {

/// Least-squares parameters of the five-parameter logistic curve
///   f(x) = gamma4 - (gamma4 - gamma1) / [1 + (x/gamma3)^gamma2]^gamma5,
/// fitted to a nondecreasing sequence sampled at x = 0..len-1.
struct LogisticFit {
    double gamma1 = 0.0; ///< lower plateau
    double gamma2 = 1.0; ///< initial steepness
    double gamma3 = 1.0; ///< x scale (inflection location)
    double gamma4 = 0.0; ///< upper plateau
    double gamma5 = 1.0; ///< asymmetry
    double rss = 0.0;
    bool fallback = false; ///< constant input, parameters set by convention

    std::array<double, 5> as_array() const {
        return {gamma1, gamma2, gamma3, gamma4, gamma5};
    }
};

namespace detail {

/// x = 0 is evaluated at a small epsilon so 0^gamma2 never appears.
inline std::vector<double> logistic5_log_abscissa(std::size_t len) {
    std::vector<double> lx(len);
    lx[0] = std::log(1e-6);
    for (std::size_t i = 1; i < len; ++i) lx[i] = std::log(static_cast<double>(i));
    return lx;
}

inline double logistic5_rss(const std::array<double, 5>& p,
                            std::span<const double> f,
                            std::span<const double> lx) {
    const auto [g1, g2, g3, g4, g5] = p;
    // outside the curve family: reject so the search stays in-bounds
    if (!(g3 > 0.0) || !(g2 > 0.0) || !(g5 > 0.0) || g1 > g4)
        return std::numeric_limits<double>::infinity();
    const double lg3 = std::log(g3);
    double rss = 0.0;
    if (g5 == 1.0) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double t = std::exp(g2 * (lx[i] - lg3));
            const double r = f[i] - (g4 - (g4 - g1) / (1.0 + t));
            rss += r * r;
        }
    } else {
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double t = std::exp(g2 * (lx[i] - lg3));
            const double shape = std::exp(-g5 * std::log1p(t));
            const double r = f[i] - (g4 - (g4 - g1) * shape);
            rss += r * r;
        }
    }
    return std::isfinite(rss) ? rss : std::numeric_limits<double>::infinity();
}

/// Nelder-Mead on 5 parameters; deterministic, keeps the incumbent best.
template <class F>
std::pair<std::array<double, 5>, double> nelder_mead5(
    const std::array<double, 5>& start, F&& objective, int max_iter, double tol,
    double tol_rel = 0.0) {
    constexpr int dim = 5;
    std::array<std::array<double, 5>, dim + 1> pts;
    std::array<double, dim + 1> val;
    pts[0] = start;
    val[0] = objective(start);
    for (int k = 0; k < dim; ++k) {
        pts[k + 1] = start;
        const double step = std::max(0.1 * std::abs(start[k]), 0.025);
        pts[k + 1][k] += step;
        val[k + 1] = objective(pts[k + 1]);
    }
    std::array<int, dim + 1> order;
    auto sort_order = [&] {
        for (int k = 0; k <= dim; ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return val[a] != val[b] ? val[a] < val[b] : a < b;
        });
    };
    for (int it = 0; it < max_iter; ++it) {
        sort_order();
        const int best = order[0], worst = order[dim], second = order[dim - 1];
        if (std::isfinite(val[best]) &&
            val[worst] - val[best] <= tol + tol_rel * std::abs(val[best]))
            break;
        std::array<double, 5> centroid{};
        for (int k = 0; k <= dim; ++k) {
            if (k == worst) continue;
            for (int d = 0; d < dim; ++d) centroid[d] += pts[k][d];
        }
        for (int d = 0; d < dim; ++d) centroid[d] /= dim;
        auto blend = [&](double coef) {
            std::array<double, 5> q;
            for (int d = 0; d < dim; ++d)
                q[d] = centroid[d] + coef * (pts[worst][d] - centroid[d]);
            return q;
        };
        const auto reflected = blend(-1.0);
        const double fr = objective(reflected);
        if (fr < val[best]) {
            const auto expanded = blend(-2.0);
            const double fe = objective(expanded);
            if (fe < fr) {
                pts[worst] = expanded;
                val[worst] = fe;
            } else {
                pts[worst] = reflected;
                val[worst] = fr;
            }
        } else if (fr < val[second]) {
            pts[worst] = reflected;
            val[worst] = fr;
        } else {
            const bool outside = fr < val[worst];
            const auto contracted = blend(outside ? -0.5 : 0.5);
            const double fc = objective(contracted);
            if (fc < (outside ? fr : val[worst])) {
                pts[worst] = contracted;
                val[worst] = fc;
            } else {
                for (int k = 0; k <= dim; ++k) {
                    if (k == order[0]) continue;
                    for (int d = 0; d < dim; ++d)
                        pts[k][d] = pts[order[0]][d] + 0.5 * (pts[k][d] - pts[order[0]][d]);
                    val[k] = objective(pts[k]);
                }
            }
        }
    }
    sort_order();
    return {pts[order[0]], val[order[0]]};
}

} // namespace detail

/// Fits the 5PL curve by multi-start local search over a fixed grid of
/// initial values; best residual sum of squares wins, ties keep the earlier
/// start. Purely deterministic: the same input always yields the same fit.
inline LogisticFit fit_logistic5(std::span<const double> f) {
    if (f.size() < 2)
        throw std::invalid_argument("fit_logistic5: need at least 2 points");
    for (std::size_t i = 1; i < f.size(); ++i)
        if (f[i] < f[i - 1])
            throw std::invalid_argument("fit_logistic5: input must be nondecreasing");

    LogisticFit fit;
    if (f.back() - f.front() <= 1e-15) {
        fit.gamma1 = fit.gamma4 = f.front();
        fit.gamma2 = fit.gamma3 = fit.gamma5 = 1.0;
        fit.fallback = true;
        double rss = 0.0;
        for (const double v : f) rss += (v - fit.gamma1) * (v - fit.gamma1);
        fit.rss = rss;
        return fit;
    }

    const auto lx = detail::logistic5_log_abscissa(f.size());
    auto objective = [&](const std::array<double, 5>& p) {
        return detail::logistic5_rss(p, f, lx);
    };

    static constexpr double kScale[] = {1.0, 2.0, 5.0, 10.0, 20.0};
    static constexpr double kSteep[] = {0.5, 1.0, 2.0, 4.0};
    static constexpr double kAsym[] = {0.5, 1.0, 2.0};

    std::array<double, 5> best{};
    double best_rss = std::numeric_limits<double>::infinity();
    for (const double g3 : kScale)
        for (const double g2 : kSteep)
            for (const double g5 : kAsym) {
                const std::array<double, 5> start{f.front(), g2, g3, f.back(), g5};
                auto [p, rss] =
                    detail::nelder_mead5(start, objective, 60, 1e-16, 1e-9);
                if (rss < best_rss) {
                    best_rss = rss;
                    best = p;
                }
            }
    // polish the winner with restarted searches
    for (int round = 0; round < 3; ++round) {
        auto [p, rss] = detail::nelder_mead5(best, objective, 500, 1e-18, 1e-13);
        if (rss < best_rss) {
            best_rss = rss;
            best = p;
        }
    }
    fit.gamma1 = best[0];
    fit.gamma2 = best[1];
    fit.gamma3 = best[2];
    fit.gamma4 = best[3];
    fit.gamma5 = best[4];
    fit.rss = best_rss;
    return fit;
}

} // namespace bnet
