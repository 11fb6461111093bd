#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bnet/parallel.hpp"
#include "bnet/rng.hpp"

namespace bnet {

// ---------------------------------------------------------------------------
// Data plumbing
// ---------------------------------------------------------------------------

/// Row-major numeric matrix.
class DataMatrix {
public:
    DataMatrix() = default;
    DataMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }
    std::span<double> row(std::size_t r) {
        return {data_.data() + r * cols_, cols_};
    }
    const std::vector<double>& data() const noexcept { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = 1469598103934665603ULL) noexcept {
    for (const unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Hash of a feature-name list; persisted models refuse to score data with a
/// different schema.
inline std::uint64_t schema_hash(std::span<const std::string> names) {
    std::uint64_t h = fnv1a("bnet-schema");
    for (const auto& name : names) {
        h = fnv1a(name, h);
        h = fnv1a("\n", h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Forest configuration
// ---------------------------------------------------------------------------

enum class ForestTask : std::uint8_t {
    kRegression = 0,
    kQuantile = 1,     ///< regression trees that keep their leaf responses
    kClassification = 2,
};

struct ForestConfig {
    std::size_t n_trees = 500;
    std::size_t candidate_features = 0; ///< 0: floor(sqrt(p))
    std::size_t min_node_size = 0;      ///< 0: 10 for regression/quantile, 1 for classification
    std::size_t max_depth = 0;          ///< 0: unlimited
    std::uint64_t seed = 0;
    ForestTask task = ForestTask::kRegression;

    std::size_t effective_mtry(std::size_t p) const {
        const std::size_t m = candidate_features
                                  ? candidate_features
                                  : static_cast<std::size_t>(
                                        std::floor(std::sqrt(static_cast<double>(p))));
        return std::min(std::max<std::size_t>(m, 1), p);
    }
    std::size_t effective_min_node() const {
        if (min_node_size) return min_node_size;
        return task == ForestTask::kClassification ? 1 : 10;
    }
};

// ---------------------------------------------------------------------------
// Forest
// ---------------------------------------------------------------------------

/// Random forest with bagging, variance/Gini splitting on midpoint
/// thresholds, out-of-bag bookkeeping and permutation importance. Trees are
/// grown from per-tree substreams of the forest seed, so training is
/// reproducible at any thread count.
class Forest {
public:
    struct Node {
        std::int32_t feature = -1; ///< -1: leaf
        std::int32_t left = -1;
        std::int32_t right = -1;
        double threshold = 0.0;
        double leaf_value = 0.0;
        std::uint32_t payload_begin = 0;
        std::uint32_t payload_end = 0;
    };

    struct Tree {
        std::vector<Node> nodes;
        std::vector<std::uint32_t> leaf_rows; ///< quantile: bootstrap rows by leaf
        std::vector<double> leaf_dist;        ///< classification: distributions by leaf
        std::vector<std::uint32_t> oob;       ///< rows outside this tree's bag
    };

    static Forest train(const DataMatrix& x, std::span<const double> y,
                        ForestConfig cfg, std::vector<std::string> schema,
                        unsigned threads = 0);

    // --- prediction ---------------------------------------------------------

    double predict(std::span<const double> row) const {
        require_regression("predict");
        check_row(row);
        double sum = 0.0;
        for (const auto& tree : trees_) sum += tree.nodes[leaf_of(tree, row)].leaf_value;
        return sum / static_cast<double>(trees_.size());
    }

    std::vector<double> predict_class_probabilities(std::span<const double> row) const {
        if (task_ != ForestTask::kClassification)
            throw std::invalid_argument("forest does not hold a classifier");
        check_row(row);
        std::vector<double> probs(n_classes_, 0.0);
        for (const auto& tree : trees_) {
            const auto& node = tree.nodes[leaf_of(tree, row)];
            for (std::size_t c = 0; c < n_classes_; ++c)
                probs[c] += tree.leaf_dist[node.payload_begin + c];
        }
        for (auto& p : probs) p /= static_cast<double>(trees_.size());
        return probs;
    }

    /// Weighted empirical quantiles at the given levels (quantile task only).
    /// Each training response is weighted by how often it shares a leaf with
    /// the query row, normalized per leaf.
    std::vector<double> predict_quantiles(std::span<const double> row,
                                          std::span<const double> levels) const {
        if (task_ != ForestTask::kQuantile)
            throw std::invalid_argument("forest was not trained for quantiles");
        check_row(row);
        for (const double q : levels)
            if (!(q > 0.0 && q < 1.0))
                throw std::invalid_argument("quantile level must lie in (0,1)");
        std::vector<double> w(responses_.size(), 0.0);
        for (const auto& tree : trees_) {
            const auto& node = tree.nodes[leaf_of(tree, row)];
            const double share =
                1.0 / static_cast<double>(node.payload_end - node.payload_begin);
            for (std::uint32_t k = node.payload_begin; k < node.payload_end; ++k)
                w[tree.leaf_rows[k]] += share;
        }
        double total = 0.0;
        for (const double v : w) total += v;
        std::vector<double> out(levels.size());
        for (std::size_t qi = 0; qi < levels.size(); ++qi) {
            const double target = levels[qi] * total;
            double cum = 0.0;
            double value = responses_[sorted_by_response_.back()];
            for (const std::uint32_t r : sorted_by_response_) {
                cum += w[r];
                if (cum >= target && w[r] > 0.0) {
                    value = responses_[r];
                    break;
                }
            }
            out[qi] = value;
        }
        return out;
    }

    double predict_quantile(std::span<const double> row, double level) const {
        return predict_quantiles(row, std::span<const double>(&level, 1))[0];
    }

    // --- out-of-bag evaluation ----------------------------------------------

    /// Per-row OOB mean prediction; NaN for rows used by every tree.
    std::vector<double> oob_predictions(const DataMatrix& x) const {
        require_regression("oob_predictions");
        check_matrix(x);
        std::vector<double> sum(x.rows(), 0.0);
        std::vector<std::uint32_t> count(x.rows(), 0);
        for (const auto& tree : trees_)
            for (const std::uint32_t r : tree.oob) {
                sum[r] += tree.nodes[leaf_of(tree, x.row(r))].leaf_value;
                ++count[r];
            }
        std::vector<double> out(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r)
            out[r] = count[r] ? sum[r] / count[r]
                              : std::numeric_limits<double>::quiet_NaN();
        return out;
    }

    double oob_mse(const DataMatrix& x, std::span<const double> y) const {
        const auto pred = oob_predictions(x);
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t r = 0; r < pred.size(); ++r) {
            if (std::isnan(pred[r])) continue;
            const double e = pred[r] - y[r];
            sum += e * e;
            ++used;
        }
        if (used == 0) throw std::runtime_error("no out-of-bag rows");
        return sum / static_cast<double>(used);
    }

    /// OOB vote shares per row (classification), row-major rows x classes.
    DataMatrix oob_class_votes(const DataMatrix& x) const {
        if (task_ != ForestTask::kClassification)
            throw std::invalid_argument("forest does not hold a classifier");
        check_matrix(x);
        DataMatrix votes(x.rows(), n_classes_);
        for (const auto& tree : trees_)
            for (const std::uint32_t r : tree.oob) {
                const auto& node = tree.nodes[leaf_of(tree, x.row(r))];
                for (std::size_t c = 0; c < n_classes_; ++c)
                    votes.at(r, c) += tree.leaf_dist[node.payload_begin + c];
            }
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < n_classes_; ++c) total += votes.at(r, c);
            if (total > 0.0)
                for (std::size_t c = 0; c < n_classes_; ++c) votes.at(r, c) /= total;
        }
        return votes;
    }

    double oob_accuracy(const DataMatrix& x, std::span<const double> y) const {
        const auto votes = oob_class_votes(x);
        std::size_t correct = 0, used = 0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            double best = 0.0, total = 0.0;
            std::size_t arg = 0;
            for (std::size_t c = 0; c < n_classes_; ++c) {
                total += votes.at(r, c);
                if (votes.at(r, c) > best) {
                    best = votes.at(r, c);
                    arg = c;
                }
            }
            if (total == 0.0) continue;
            ++used;
            if (arg == static_cast<std::size_t>(y[r])) ++correct;
        }
        if (used == 0) throw std::runtime_error("no out-of-bag rows");
        return static_cast<double>(correct) / static_cast<double>(used);
    }

    /// Permutation importance: mean over trees of the OOB error increase when
    /// one feature's OOB values are shuffled. Also reports the standard error
    /// over trees.
    struct ImportanceResult {
        std::vector<double> score;
        std::vector<double> stderr_over_trees;
    };
    ImportanceResult importance(const DataMatrix& x, std::span<const double> y,
                                unsigned threads = 0) const;

    // --- accessors -----------------------------------------------------------

    std::size_t tree_count() const noexcept { return trees_.size(); }
    const Tree& tree(std::size_t k) const { return trees_[k]; }
    ForestTask task() const noexcept { return task_; }
    std::size_t n_classes() const noexcept { return n_classes_; }
    const std::vector<std::string>& schema() const noexcept { return schema_; }
    std::uint64_t schema_id() const noexcept { return schema_hash_; }
    const ForestConfig& config() const noexcept { return config_; }
    std::span<const double> training_responses() const noexcept { return responses_; }

    // --- persistence ----------------------------------------------------------

    void save(std::ostream& out) const;
    static Forest load(std::istream& in);
    static Forest load_checked(std::istream& in, std::uint64_t expected_schema);

private:
    void require_regression(const char* fn) const {
        if (task_ == ForestTask::kClassification)
            throw std::invalid_argument(std::string(fn) +
                                        ": forest holds a classifier");
    }
    void check_row(std::span<const double> row) const {
        if (row.size() != schema_.size())
            throw std::invalid_argument("feature row does not match the schema");
    }
    void check_matrix(const DataMatrix& x) const {
        if (x.cols() != schema_.size())
            throw std::invalid_argument("feature matrix does not match the schema");
    }

    static std::size_t leaf_of(const Tree& tree, std::span<const double> row) {
        std::size_t k = 0;
        while (tree.nodes[k].feature >= 0) {
            const auto& node = tree.nodes[k];
            k = row[static_cast<std::size_t>(node.feature)] <= node.threshold
                    ? static_cast<std::size_t>(node.left)
                    : static_cast<std::size_t>(node.right);
        }
        return k;
    }

    struct Builder;

    std::vector<Tree> trees_;
    std::vector<std::string> schema_;
    std::uint64_t schema_hash_ = 0;
    ForestConfig config_;
    ForestTask task_ = ForestTask::kRegression;
    std::size_t n_classes_ = 0;
    std::vector<double> responses_;               ///< kept for quantile forests
    std::vector<std::uint32_t> sorted_by_response_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct Forest::Builder {
    const DataMatrix& x;
    std::span<const double> y;
    const ForestConfig& cfg;
    std::size_t mtry;
    std::size_t min_leaf;
    std::size_t n_classes;

    Builder(const DataMatrix& x_in, std::span<const double> y_in,
            const ForestConfig& cfg_in, std::size_t n_classes_in)
        : x(x_in),
          y(y_in),
          cfg(cfg_in),
          mtry(cfg_in.effective_mtry(x_in.cols())),
          min_leaf(cfg_in.effective_min_node()),
          n_classes(n_classes_in) {}

    struct Frame {
        std::int32_t node;
        std::uint32_t begin;
        std::uint32_t end;
        std::uint32_t depth;
    };

    // scratch, reused across nodes of one tree
    std::vector<std::uint32_t> rows;    // bootstrap row ids, partitioned in place
    std::vector<std::uint32_t> scratch; // stable_partition buffer
    std::vector<std::size_t> features;  // candidate features per node
    std::vector<std::pair<double, double>> xy;
    std::vector<double> left_counts, right_counts;

    void grow(Tree& tree, CounterRng& rng) {
        const std::size_t n = x.rows();
        rows.resize(n);
        std::vector<std::uint8_t> inbag(n, 0);
        for (std::size_t k = 0; k < n; ++k) {
            const auto r = static_cast<std::uint32_t>(rng.uniform_below(n));
            rows[k] = r;
            inbag[r] = 1;
        }
        for (std::size_t r = 0; r < n; ++r)
            if (!inbag[r]) tree.oob.push_back(static_cast<std::uint32_t>(r));

        tree.nodes.push_back({});
        std::vector<Frame> stack;
        stack.push_back({0, 0, static_cast<std::uint32_t>(n), 0});
        while (!stack.empty()) {
            const Frame fr = stack.back();
            stack.pop_back();
            process(tree, fr, rng, stack);
        }
    }

    void make_leaf(Tree& tree, std::int32_t node, std::uint32_t begin,
                   std::uint32_t end) {
        Node& nd = tree.nodes[static_cast<std::size_t>(node)];
        nd.feature = -1;
        if (cfg.task == ForestTask::kClassification) {
            nd.payload_begin = static_cast<std::uint32_t>(tree.leaf_dist.size());
            tree.leaf_dist.resize(tree.leaf_dist.size() + n_classes, 0.0);
            for (std::uint32_t k = begin; k < end; ++k)
                tree.leaf_dist[nd.payload_begin +
                               static_cast<std::size_t>(y[rows[k]])] += 1.0;
            const double total = static_cast<double>(end - begin);
            for (std::size_t c = 0; c < n_classes; ++c)
                tree.leaf_dist[nd.payload_begin + c] /= total;
            nd.payload_end = nd.payload_begin + static_cast<std::uint32_t>(n_classes);
        } else {
            double sum = 0.0;
            for (std::uint32_t k = begin; k < end; ++k) sum += y[rows[k]];
            nd.leaf_value = sum / static_cast<double>(end - begin);
            if (cfg.task == ForestTask::kQuantile) {
                nd.payload_begin = static_cast<std::uint32_t>(tree.leaf_rows.size());
                for (std::uint32_t k = begin; k < end; ++k)
                    tree.leaf_rows.push_back(rows[k]);
                nd.payload_end = static_cast<std::uint32_t>(tree.leaf_rows.size());
            }
        }
    }

    void process(Tree& tree, const Frame& fr, CounterRng& rng,
                 std::vector<Frame>& stack) {
        const std::uint32_t size = fr.end - fr.begin;
        bool splittable = size >= 2 * min_leaf;
        if (cfg.max_depth && fr.depth >= cfg.max_depth) splittable = false;
        if (splittable) {
            bool pure = true;
            const double first = y[rows[fr.begin]];
            for (std::uint32_t k = fr.begin + 1; k < fr.end; ++k)
                if (y[rows[k]] != first) {
                    pure = false;
                    break;
                }
            if (pure) splittable = false;
        }
        if (!splittable) {
            make_leaf(tree, fr.node, fr.begin, fr.end);
            return;
        }

        draw_candidates(rng);
        double best_gain = 0.0;
        std::int32_t best_feature = -1;
        double best_threshold = 0.0;
        for (const std::size_t f : features) {
            double gain, thr;
            const bool ok =
                cfg.task == ForestTask::kClassification
                    ? best_split_gini(f, fr.begin, fr.end, gain, thr)
                    : best_split_variance(f, fr.begin, fr.end, gain, thr);
            if (ok && gain > best_gain) {
                best_gain = gain;
                best_feature = static_cast<std::int32_t>(f);
                best_threshold = thr;
            }
        }
        if (best_feature < 0) {
            make_leaf(tree, fr.node, fr.begin, fr.end);
            return;
        }

        // stable partition keeps a deterministic row order on both sides
        scratch.clear();
        std::uint32_t mid = fr.begin;
        for (std::uint32_t k = fr.begin; k < fr.end; ++k) {
            const std::uint32_t r = rows[k];
            if (x.at(r, static_cast<std::size_t>(best_feature)) <= best_threshold)
                rows[mid++] = r;
            else
                scratch.push_back(r);
        }
        std::copy(scratch.begin(), scratch.end(), rows.begin() + mid);

        const auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back({});
        const auto right = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.push_back({});
        Node& nd = tree.nodes[static_cast<std::size_t>(fr.node)];
        nd.feature = best_feature;
        nd.threshold = best_threshold;
        nd.left = left;
        nd.right = right;
        // left child processed first: push it last
        stack.push_back({right, mid, fr.end, fr.depth + 1});
        stack.push_back({left, fr.begin, mid, fr.depth + 1});
    }

    void draw_candidates(CounterRng& rng) {
        const std::size_t p = x.cols();
        features.resize(p);
        std::iota(features.begin(), features.end(), std::size_t{0});
        for (std::size_t k = 0; k < mtry; ++k) {
            const std::size_t pick = k + rng.uniform_below(p - k);
            std::swap(features[k], features[pick]);
        }
        features.resize(mtry);
        std::sort(features.begin(), features.end()); // tie-break by feature index
    }

    /// Largest decrease of within-node response variance; thresholds are
    /// midpoints between consecutive distinct values, scanned in ascending
    /// order so equal gains keep the smallest threshold.
    bool best_split_variance(std::size_t f, std::uint32_t begin, std::uint32_t end,
                             double& gain, double& threshold) {
        const std::size_t m = end - begin;
        xy.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            const std::uint32_t r = rows[begin + k];
            xy[k] = {x.at(r, f), y[r]};
        }
        std::sort(xy.begin(), xy.end());
        if (xy.front().first == xy.back().first) return false;
        double total = 0.0;
        for (const auto& [xv, yv] : xy) total += yv;
        const double parent_score = total * total / static_cast<double>(m);
        double left_sum = 0.0;
        bool found = false;
        gain = 0.0;
        for (std::size_t k = 0; k + 1 < m; ++k) {
            left_sum += xy[k].second;
            if (xy[k].first == xy[k + 1].first) continue;
            const std::size_t lc = k + 1, rc = m - lc;
            if (lc < min_leaf || rc < min_leaf) continue;
            const double right_sum = total - left_sum;
            const double score = left_sum * left_sum / static_cast<double>(lc) +
                                 right_sum * right_sum / static_cast<double>(rc);
            const double g = score - parent_score;
            if (!found || g > gain) {
                found = true;
                gain = g;
                threshold = midpoint(xy[k].first, xy[k + 1].first);
            }
        }
        return found;
    }

    /// Largest Gini impurity decrease, same threshold and tie conventions.
    bool best_split_gini(std::size_t f, std::uint32_t begin, std::uint32_t end,
                         double& gain, double& threshold) {
        const std::size_t m = end - begin;
        xy.resize(m);
        for (std::size_t k = 0; k < m; ++k) {
            const std::uint32_t r = rows[begin + k];
            xy[k] = {x.at(r, f), y[r]};
        }
        std::sort(xy.begin(), xy.end());
        if (xy.front().first == xy.back().first) return false;
        right_counts.assign(n_classes, 0.0);
        left_counts.assign(n_classes, 0.0);
        for (const auto& [xv, yv] : xy) right_counts[static_cast<std::size_t>(yv)] += 1.0;
        double parent_score = 0.0;
        for (const double c : right_counts) parent_score += c * c;
        parent_score /= static_cast<double>(m);
        bool found = false;
        gain = 0.0;
        for (std::size_t k = 0; k + 1 < m; ++k) {
            const auto cls = static_cast<std::size_t>(xy[k].second);
            left_counts[cls] += 1.0;
            right_counts[cls] -= 1.0;
            if (xy[k].first == xy[k + 1].first) continue;
            const std::size_t lc = k + 1, rc = m - lc;
            if (lc < min_leaf || rc < min_leaf) continue;
            double score = 0.0, ls = 0.0, rs = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c) {
                ls += left_counts[c] * left_counts[c];
                rs += right_counts[c] * right_counts[c];
            }
            score = ls / static_cast<double>(lc) + rs / static_cast<double>(rc);
            const double g = score - parent_score;
            if (!found || g > gain) {
                found = true;
                gain = g;
                threshold = midpoint(xy[k].first, xy[k + 1].first);
            }
        }
        return found;
    }

    static double midpoint(double a, double b) {
        const double mid = a + (b - a) / 2.0;
        // adjacent doubles can round the midpoint onto b; keep a separator
        return mid < b ? mid : a;
    }
};

inline Forest Forest::train(const DataMatrix& x, std::span<const double> y,
                            ForestConfig cfg, std::vector<std::string> schema,
                            unsigned threads) {
    if (x.rows() != y.size())
        throw std::invalid_argument("train: row/response count mismatch");
    if (x.rows() < 2) throw std::invalid_argument("train: need at least 2 rows");
    if (schema.size() != x.cols())
        throw std::invalid_argument("train: schema size must match columns");
    if (cfg.n_trees < 1) throw std::invalid_argument("train: need at least one tree");
    if (cfg.candidate_features > x.cols())
        throw std::invalid_argument("train: candidate features exceed columns");
    for (const double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("train: non-finite response");

    Forest forest;
    forest.config_ = cfg;
    forest.task_ = cfg.task;
    forest.schema_ = std::move(schema);
    forest.schema_hash_ = schema_hash(forest.schema_);
    if (cfg.task == ForestTask::kClassification) {
        double top = 0.0;
        for (const double v : y) {
            if (v < 0.0 || v != std::floor(v))
                throw std::invalid_argument("train: class labels must be 0,1,...");
            top = std::max(top, v);
        }
        forest.n_classes_ = static_cast<std::size_t>(top) + 1;
    }
    if (cfg.task == ForestTask::kQuantile) {
        forest.responses_.assign(y.begin(), y.end());
        forest.sorted_by_response_.resize(y.size());
        std::iota(forest.sorted_by_response_.begin(), forest.sorted_by_response_.end(),
                  0u);
        std::sort(forest.sorted_by_response_.begin(), forest.sorted_by_response_.end(),
                  [&](std::uint32_t a, std::uint32_t b) {
                      return y[a] != y[b] ? y[a] < y[b] : a < b;
                  });
    }

    forest.trees_.resize(cfg.n_trees);
    parallel_for(cfg.n_trees, threads, [&](std::size_t t) {
        Builder builder(x, y, cfg, forest.n_classes_);
        CounterRng rng(derive_key(cfg.seed, 0x7472656573ULL, t)); // per-tree stream
        builder.grow(forest.trees_[t], rng);
    });
    return forest;
}

// ---------------------------------------------------------------------------
// Permutation importance
// ---------------------------------------------------------------------------

inline Forest::ImportanceResult Forest::importance(const DataMatrix& x,
                                                   std::span<const double> y,
                                                   unsigned threads) const {
    check_matrix(x);
    if (x.rows() != y.size())
        throw std::invalid_argument("importance: row/response count mismatch");
    const std::size_t p = x.cols();
    const std::size_t t_count = trees_.size();
    // per-tree, per-feature error increase
    std::vector<double> delta(t_count * p, 0.0);

    parallel_for(t_count, threads, [&](std::size_t t) {
        const Tree& tree = trees_[t];
        if (tree.oob.empty()) return;
        const std::size_t m = tree.oob.size();
        auto tree_error = [&](auto&& value_at) {
            double err = 0.0;
            std::vector<double> buf(p);
            for (std::size_t k = 0; k < m; ++k) {
                const std::uint32_t r = tree.oob[k];
                for (std::size_t c = 0; c < p; ++c) buf[c] = value_at(k, c);
                const auto& node = tree.nodes[leaf_of(tree, buf)];
                if (task_ == ForestTask::kClassification) {
                    std::size_t arg = 0;
                    double best = -1.0;
                    for (std::size_t c = 0; c < n_classes_; ++c)
                        if (tree.leaf_dist[node.payload_begin + c] > best) {
                            best = tree.leaf_dist[node.payload_begin + c];
                            arg = c;
                        }
                    err += arg == static_cast<std::size_t>(y[r]) ? 0.0 : 1.0;
                } else {
                    const double e = node.leaf_value - y[r];
                    err += e * e;
                }
            }
            return err / static_cast<double>(m);
        };
        const double baseline =
            tree_error([&](std::size_t k, std::size_t c) { return x.at(tree.oob[k], c); });
        CounterRng rng(derive_key(config_.seed, 0x696d706fULL, t));
        std::vector<std::uint32_t> perm(m);
        for (std::size_t f = 0; f < p; ++f) {
            std::iota(perm.begin(), perm.end(), 0u);
            for (std::size_t k = m; k > 1; --k)
                std::swap(perm[k - 1], perm[rng.uniform_below(k)]);
            const double shuffled =
                tree_error([&](std::size_t k, std::size_t c) {
                    return c == f ? x.at(tree.oob[perm[k]], c) : x.at(tree.oob[k], c);
                });
            delta[t * p + f] = shuffled - baseline;
        }
    });

    ImportanceResult out;
    out.score.assign(p, 0.0);
    out.stderr_over_trees.assign(p, 0.0);
    for (std::size_t f = 0; f < p; ++f) {
        double mean = 0.0;
        for (std::size_t t = 0; t < t_count; ++t) mean += delta[t * p + f];
        mean /= static_cast<double>(t_count);
        double var = 0.0;
        for (std::size_t t = 0; t < t_count; ++t) {
            const double d = delta[t * p + f] - mean;
            var += d * d;
        }
        var /= static_cast<double>(t_count);
        out.score[f] = mean;
        out.stderr_over_trees[f] = std::sqrt(var / static_cast<double>(t_count));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Persistence: versioned binary container, see docs/FILE_FORMATS.md
// ---------------------------------------------------------------------------

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <class T>
void put_pod(std::ostream& out, T v) {
    put_bytes(out, &v, sizeof v);
}
inline void get_bytes(std::istream& in, void* p, std::size_t n) {
    if (!in.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))
        throw std::runtime_error("forest container: truncated input");
}
template <class T>
T get_pod(std::istream& in) {
    T v;
    get_bytes(in, &v, sizeof v);
    return v;
}
template <class T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
    put_pod<std::uint64_t>(out, v.size());
    if (!v.empty()) put_bytes(out, v.data(), v.size() * sizeof(T));
}
template <class T>
std::vector<T> get_vec(std::istream& in) {
    const auto n = get_pod<std::uint64_t>(in);
    std::vector<T> v(static_cast<std::size_t>(n));
    if (n) get_bytes(in, v.data(), static_cast<std::size_t>(n) * sizeof(T));
    return v;
}

inline constexpr char kForestMagic[8] = {'B', 'N', 'E', 'T', 'F', 'R', 'S', 'T'};
inline constexpr std::uint32_t kForestVersion = 1;

} // namespace detail

inline void Forest::save(std::ostream& out) const {
    using namespace detail;
    put_bytes(out, kForestMagic, sizeof kForestMagic);
    put_pod<std::uint32_t>(out, kForestVersion);
    put_pod<std::uint8_t>(out, static_cast<std::uint8_t>(task_));
    put_pod<std::uint64_t>(out, schema_hash_);
    put_pod<std::uint64_t>(out, n_classes_);
    put_pod<std::uint64_t>(out, schema_.size());
    for (const auto& name : schema_) {
        put_pod<std::uint64_t>(out, name.size());
        put_bytes(out, name.data(), name.size());
    }
    put_pod<std::uint64_t>(out, config_.n_trees);
    put_pod<std::uint64_t>(out, config_.candidate_features);
    put_pod<std::uint64_t>(out, config_.min_node_size);
    put_pod<std::uint64_t>(out, config_.max_depth);
    put_pod<std::uint64_t>(out, config_.seed);
    put_vec(out, responses_);
    put_pod<std::uint64_t>(out, trees_.size());
    for (const auto& tree : trees_) {
        // nodes go member by member: raw struct bytes would carry padding,
        // and identical forests must serialize to identical bytes
        put_pod<std::uint64_t>(out, tree.nodes.size());
        for (const auto& node : tree.nodes) {
            put_pod<std::int32_t>(out, node.feature);
            put_pod<std::int32_t>(out, node.left);
            put_pod<std::int32_t>(out, node.right);
            put_pod<double>(out, node.threshold);
            put_pod<double>(out, node.leaf_value);
            put_pod<std::uint32_t>(out, node.payload_begin);
            put_pod<std::uint32_t>(out, node.payload_end);
        }
        put_vec(out, tree.leaf_rows);
        put_vec(out, tree.leaf_dist);
        put_vec(out, tree.oob);
    }
}

inline Forest Forest::load(std::istream& in) {
    using namespace detail;
    char magic[8];
    get_bytes(in, magic, sizeof magic);
    if (std::memcmp(magic, kForestMagic, sizeof magic) != 0)
        throw std::runtime_error("forest container: bad magic bytes");
    const auto version = get_pod<std::uint32_t>(in);
    if (version != kForestVersion)
        throw std::runtime_error("forest container: unsupported version");
    Forest forest;
    forest.task_ = static_cast<ForestTask>(get_pod<std::uint8_t>(in));
    forest.schema_hash_ = get_pod<std::uint64_t>(in);
    forest.n_classes_ = static_cast<std::size_t>(get_pod<std::uint64_t>(in));
    const auto n_names = get_pod<std::uint64_t>(in);
    forest.schema_.resize(static_cast<std::size_t>(n_names));
    for (auto& name : forest.schema_) {
        const auto len = get_pod<std::uint64_t>(in);
        name.resize(static_cast<std::size_t>(len));
        if (len) get_bytes(in, name.data(), static_cast<std::size_t>(len));
    }
    if (schema_hash(forest.schema_) != forest.schema_hash_)
        throw std::runtime_error("forest container: schema hash does not match names");
    forest.config_.n_trees = static_cast<std::size_t>(get_pod<std::uint64_t>(in));
    forest.config_.candidate_features =
        static_cast<std::size_t>(get_pod<std::uint64_t>(in));
    forest.config_.min_node_size = static_cast<std::size_t>(get_pod<std::uint64_t>(in));
    forest.config_.max_depth = static_cast<std::size_t>(get_pod<std::uint64_t>(in));
    forest.config_.seed = get_pod<std::uint64_t>(in);
    forest.config_.task = forest.task_;
    forest.responses_ = get_vec<double>(in);
    const auto t_count = get_pod<std::uint64_t>(in);
    forest.trees_.resize(static_cast<std::size_t>(t_count));
    for (auto& tree : forest.trees_) {
        const auto n_nodes = get_pod<std::uint64_t>(in);
        tree.nodes.resize(static_cast<std::size_t>(n_nodes));
        for (auto& node : tree.nodes) {
            node.feature = get_pod<std::int32_t>(in);
            node.left = get_pod<std::int32_t>(in);
            node.right = get_pod<std::int32_t>(in);
            node.threshold = get_pod<double>(in);
            node.leaf_value = get_pod<double>(in);
            node.payload_begin = get_pod<std::uint32_t>(in);
            node.payload_end = get_pod<std::uint32_t>(in);
        }
        tree.leaf_rows = get_vec<std::uint32_t>(in);
        tree.leaf_dist = get_vec<double>(in);
        tree.oob = get_vec<std::uint32_t>(in);
    }
    if (!forest.responses_.empty()) {
        forest.sorted_by_response_.resize(forest.responses_.size());
        std::iota(forest.sorted_by_response_.begin(),
                  forest.sorted_by_response_.end(), 0u);
        std::sort(forest.sorted_by_response_.begin(),
                  forest.sorted_by_response_.end(),
                  [&](std::uint32_t a, std::uint32_t b) {
                      return forest.responses_[a] != forest.responses_[b]
                                 ? forest.responses_[a] < forest.responses_[b]
                                 : a < b;
                  });
    }
    return forest;
}

inline Forest Forest::load_checked(std::istream& in,
                                   std::uint64_t expected_schema) {
    Forest forest = load(in);
    if (forest.schema_hash_ != expected_schema)
        throw std::runtime_error("forest container: schema hash mismatch");
    return forest;
}

} // namespace bnet
