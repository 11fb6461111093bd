#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "bnet/forest.hpp"

using namespace bnet;

namespace {

struct Synthetic {
    DataMatrix x;
    std::vector<double> y;
};

/// p features uniform on [0,1]; y = x_0 + noise_sd * N(0,1).
Synthetic make_linear(std::size_t n, std::size_t p, double noise_sd,
                      std::uint64_t seed) {
    CounterRng rng(seed);
    Synthetic s{DataMatrix(n, p), std::vector<double>(n)};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) s.x.at(r, c) = rng.uniform01();
        s.y[r] = s.x.at(r, 0) + (noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0);
    }
    return s;
}

std::vector<std::string> names(std::size_t p) {
    std::vector<std::string> out(p);
    for (std::size_t k = 0; k < p; ++k) out[k] = "x" + std::to_string(k);
    return out;
}

std::string serialized(const Forest& f) {
    std::ostringstream os;
    f.save(os);
    return os.str();
}

} // namespace

TEST_CASE("constant response predicts the constant everywhere") {
    const std::size_t n = 60, p = 3;
    CounterRng rng(1);
    DataMatrix x(n, p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < p; ++c) x.at(r, c) = rng.uniform01();
    const std::vector<double> y(n, 0.7);
    ForestConfig cfg;
    cfg.n_trees = 30;
    cfg.seed = 5;
    const Forest f = Forest::train(x, y, cfg, names(p));
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> row(p);
        for (auto& v : row) v = rng.uniform01();
        REQUIRE(f.predict(row) == 0.7);
    }
}

TEST_CASE("noiseless linear signal: high OOB R2, in-sample beats OOB") {
    const auto data = make_linear(1000, 5, 0.0, 2);
    ForestConfig cfg;
    cfg.seed = 11;
    const Forest f = Forest::train(data.x, data.y, cfg, names(5), 2);

    const double oob_mse = f.oob_mse(data.x, data.y);
    double mean = 0.0;
    for (const double v : data.y) mean += v;
    mean /= static_cast<double>(data.y.size());
    double var = 0.0;
    for (const double v : data.y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(data.y.size());
    REQUIRE(1.0 - oob_mse / var > 0.95);

    double insample = 0.0;
    for (std::size_t r = 0; r < data.x.rows(); ++r) {
        const double e = f.predict(data.x.row(r)) - data.y[r];
        insample += e * e;
    }
    insample /= static_cast<double>(data.x.rows());
    REQUIRE(insample < oob_mse);
}

TEST_CASE("training is bit-identical across thread counts") {
    const auto data = make_linear(400, 5, 0.1, 3);
    ForestConfig cfg;
    cfg.n_trees = 50;
    cfg.seed = 21;
    const Forest f1 = Forest::train(data.x, data.y, cfg, names(5), 1);
    const Forest f3 = Forest::train(data.x, data.y, cfg, names(5), 3);
    REQUIRE(serialized(f1) == serialized(f3));
}

TEST_CASE("predictions stay inside the observed response range") {
    const auto data = make_linear(300, 4, 0.3, 4);
    const auto [lo, hi] = std::minmax_element(data.y.begin(), data.y.end());
    ForestConfig cfg;
    cfg.n_trees = 100;
    cfg.seed = 31;
    const Forest f = Forest::train(data.x, data.y, cfg, names(4));
    CounterRng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> row(4);
        for (auto& v : row) v = 2.0 * rng.uniform01() - 0.5; // partly outside [0,1]
        const double pred = f.predict(row);
        REQUIRE(pred >= *lo);
        REQUIRE(pred <= *hi);
    }
}

TEST_CASE("fewer rows than the minimum node size give single-leaf trees") {
    const auto data = make_linear(6, 3, 0.0, 6);
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.min_node_size = 10;
    cfg.seed = 41;
    const Forest f = Forest::train(data.x, data.y, cfg, names(3));
    for (std::size_t t = 0; t < f.tree_count(); ++t)
        REQUIRE(f.tree(t).nodes.size() == 1);
}

TEST_CASE("constant features are never chosen for splitting") {
    const std::size_t n = 200, p = 4;
    CounterRng rng(7);
    DataMatrix x(n, p);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        x.at(r, 0) = rng.uniform01();
        x.at(r, 1) = 0.5; // constant
        x.at(r, 2) = rng.uniform01();
        x.at(r, 3) = 0.5; // constant
        y[r] = x.at(r, 0);
    }
    ForestConfig cfg;
    cfg.n_trees = 60;
    cfg.seed = 51;
    const Forest f = Forest::train(x, y, cfg, names(p));
    for (std::size_t t = 0; t < f.tree_count(); ++t)
        for (const auto& node : f.tree(t).nodes) {
            REQUIRE(node.feature != 1);
            REQUIRE(node.feature != 3);
        }
}

TEST_CASE("quantiles of a constant response are that constant") {
    const std::size_t n = 50;
    CounterRng rng(8);
    DataMatrix x(n, 2);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < 2; ++c) x.at(r, c) = rng.uniform01();
    const std::vector<double> y(n, 1.25);
    ForestConfig cfg;
    cfg.n_trees = 25;
    cfg.seed = 61;
    cfg.task = ForestTask::kQuantile;
    const Forest f = Forest::train(x, y, cfg, names(2));
    const std::vector<double> row{0.3, 0.6};
    for (const double q : {0.05, 0.25, 0.5, 0.9})
        REQUIRE(f.predict_quantile(row, q) == 1.25);
}

TEST_CASE("median regression approximates the conditional median") {
    const double sd = 0.3;
    const auto data = make_linear(5000, 4, sd, 9);
    ForestConfig cfg;
    cfg.n_trees = 200;
    cfg.seed = 71;
    cfg.task = ForestTask::kQuantile;
    const Forest f = Forest::train(data.x, data.y, cfg, names(4), 2);
    for (const double target : {0.25, 0.4, 0.55, 0.7}) {
        const std::vector<double> row{target, 0.5, 0.5, 0.5};
        REQUIRE(std::abs(f.predict_quantile(row, 0.5) - target) < sd / 2.0);
    }
}

TEST_CASE("quantile predictions are nondecreasing in the level") {
    const auto data = make_linear(800, 3, 0.4, 10);
    ForestConfig cfg;
    cfg.n_trees = 80;
    cfg.seed = 81;
    cfg.task = ForestTask::kQuantile;
    const Forest f = Forest::train(data.x, data.y, cfg, names(3));
    CounterRng rng(11);
    const std::vector<double> levels{0.025, 0.1, 0.25, 0.5, 0.75, 0.9, 0.975};
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> row(3);
        for (auto& v : row) v = rng.uniform01();
        const auto qs = f.predict_quantiles(row, levels);
        for (std::size_t k = 1; k < qs.size(); ++k) REQUIRE(qs[k] >= qs[k - 1]);
    }
    REQUIRE_THROWS_AS(f.predict_quantile(std::vector<double>{0.1, 0.1, 0.1}, 0.0),
                      std::invalid_argument);
}

TEST_CASE("permutation importance separates signal from noise") {
    const auto data = make_linear(600, 5, 0.0, 12);
    ForestConfig cfg;
    cfg.n_trees = 300;
    cfg.seed = 91;
    const Forest f = Forest::train(data.x, data.y, cfg, names(5), 2);
    const auto imp = f.importance(data.x, data.y, 2);
    // x0 carries all the signal
    for (std::size_t k = 1; k < 5; ++k) REQUIRE(imp.score[0] > imp.score[k]);
    // pure-noise features score near zero
    for (std::size_t k = 1; k < 5; ++k)
        REQUIRE(std::abs(imp.score[k]) < 3.0 * imp.stderr_over_trees[k]);
}

TEST_CASE("duplicated informative features both earn positive importance") {
    const std::size_t n = 800, p = 4;
    CounterRng rng(13);
    DataMatrix x(n, p);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double v = rng.uniform01();
        x.at(r, 0) = v;
        x.at(r, 1) = v; // duplicate of x0
        x.at(r, 2) = rng.uniform01();
        x.at(r, 3) = rng.uniform01();
        y[r] = v;
    }
    ForestConfig cfg;
    cfg.n_trees = 300;
    cfg.seed = 101;
    const Forest f = Forest::train(x, y, cfg, names(p), 2);
    const auto imp = f.importance(x, y, 2);
    REQUIRE(imp.score[0] > 0.0);
    REQUIRE(imp.score[1] > 0.0);
}

TEST_CASE("classifier on shuffled labels is at chance") {
    const std::size_t n = 2000, p = 5;
    CounterRng rng(14);
    DataMatrix x(n, p);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) x.at(r, c) = rng.uniform01();
        y[r] = static_cast<double>(r % 2); // balanced, independent of x
    }
    ForestConfig cfg;
    cfg.n_trees = 150;
    cfg.seed = 111;
    cfg.task = ForestTask::kClassification;
    const Forest f = Forest::train(x, y, cfg, names(p), 2);
    const double acc = f.oob_accuracy(x, y);
    const double se = std::sqrt(0.25 / static_cast<double>(n));
    REQUIRE(std::abs(acc - 0.5) < 3.0 * se);

    const auto probs = f.predict_class_probabilities(x.row(0));
    REQUIRE(probs.size() == 2);
    REQUIRE(probs[0] + probs[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("classifier recovers a separable rule") {
    const std::size_t n = 1000, p = 4;
    CounterRng rng(15);
    DataMatrix x(n, p);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) x.at(r, c) = rng.uniform01();
        y[r] = x.at(r, 1) > 0.5 ? 1.0 : 0.0;
    }
    ForestConfig cfg;
    cfg.n_trees = 100;
    cfg.seed = 121;
    cfg.task = ForestTask::kClassification;
    const Forest f = Forest::train(x, y, cfg, names(p), 2);
    REQUIRE(f.oob_accuracy(x, y) > 0.95);
}

TEST_CASE("more trees do not hurt OOB error") {
    const auto data = make_linear(500, 5, 0.2, 16);
    auto mse_with = [&](std::size_t trees) {
        ForestConfig cfg;
        cfg.n_trees = trees;
        cfg.seed = 131;
        return Forest::train(data.x, data.y, cfg, names(5), 2)
            .oob_mse(data.x, data.y);
    };
    const double coarse = mse_with(50);
    const double fine = mse_with(400);
    REQUIRE(fine <= coarse * 1.05); // weakly decreasing, within noise
}

TEST_CASE("save and load round-trip exactly") {
    const auto data = make_linear(300, 4, 0.2, 17);
    ForestConfig cfg;
    cfg.n_trees = 40;
    cfg.seed = 141;
    cfg.task = ForestTask::kQuantile;
    const Forest f = Forest::train(data.x, data.y, cfg, names(4));
    const std::string bytes = serialized(f);
    std::istringstream is(bytes);
    const Forest g = Forest::load(is);
    REQUIRE(serialized(g) == bytes);
    CounterRng rng(18);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> row(4);
        for (auto& v : row) v = rng.uniform01();
        REQUIRE(f.predict(row) == g.predict(row));
        REQUIRE(f.predict_quantile(row, 0.3) == g.predict_quantile(row, 0.3));
    }
}

TEST_CASE("load rejects schema mismatches and corrupt containers") {
    const auto data = make_linear(100, 3, 0.1, 19);
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.seed = 151;
    const Forest f = Forest::train(data.x, data.y, cfg, names(3));
    const std::string bytes = serialized(f);

    std::istringstream ok(bytes);
    REQUIRE_NOTHROW(Forest::load_checked(ok, f.schema_id()));

    std::istringstream wrong(bytes);
    const auto other = schema_hash(std::vector<std::string>{"a", "b", "c"});
    REQUIRE_THROWS_AS(Forest::load_checked(wrong, other), std::runtime_error);

    std::string garbage = bytes;
    garbage[0] = 'X';
    std::istringstream bad(garbage);
    REQUIRE_THROWS_AS(Forest::load(bad), std::runtime_error);
}

TEST_CASE("schema mismatch at prediction time is rejected") {
    const auto data = make_linear(100, 3, 0.1, 20);
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.seed = 161;
    const Forest f = Forest::train(data.x, data.y, cfg, names(3));
    REQUIRE_THROWS_AS(f.predict(std::vector<double>{0.1, 0.2}),
                      std::invalid_argument);
}
