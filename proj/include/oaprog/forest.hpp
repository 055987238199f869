#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "oaprog/common.hpp"
#include "oaprog/parallel.hpp"
#include "oaprog/rng.hpp"

namespace oaprog {

enum class Criterion { gini, entropy };

inline const char* criterion_name(Criterion c) {
    return c == Criterion::gini ? "gini" : "entropy";
}

inline std::optional<Criterion> parse_criterion(std::string_view s) {
    if (s == "gini") return Criterion::gini;
    if (s == "entropy") return Criterion::entropy;
    return std::nullopt;
}

struct ForestConfig {
    std::size_t n_trees = 100;
    std::size_t max_depth = 0;          // 0 means unlimited
    Criterion criterion = Criterion::gini;
    std::size_t min_samples_split = 2;
    std::size_t features_per_split = 0; // 0 means floor(sqrt(feature count))
    bool bootstrap = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees == 0) throw ConfigError("n_trees must be positive");
        if (min_samples_split < 2) throw ConfigError("min_samples_split must be at least 2");
    }
};

/// Balanced inverse-frequency weights: w_c = N / (K * n_c), so the weighted
/// class masses are equal and sum to N.
inline std::vector<double> class_weights(const std::vector<int>& labels, std::size_t n_classes) {
    std::vector<std::size_t> counts(n_classes, 0);
    for (int c : labels) {
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
            throw DataError("label " + std::to_string(c) + " out of range");
        ++counts[c];
    }
    std::vector<double> w(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (counts[c] == 0)
            throw DataError("class " + std::to_string(c) + " absent; weights undefined");
        w[c] = static_cast<double>(labels.size()) / (static_cast<double>(n_classes) * counts[c]);
    }
    return w;
}

/// Impurity of a weighted class-count vector.
inline double node_impurity(const std::vector<double>& weighted_counts, Criterion criterion) {
    double total = 0;
    for (double c : weighted_counts) total += c;
    if (total <= 0) return 0.0;
    double imp = 0;
    if (criterion == Criterion::gini) {
        double sum_sq = 0;
        for (double c : weighted_counts) {
            double q = c / total;
            sum_sq += q * q;
        }
        imp = 1.0 - sum_sq;
    } else {
        for (double c : weighted_counts) {
            if (c <= 0) continue;
            double q = c / total;
            imp -= q * std::log2(q);
        }
    }
    return imp;
}

/// Impurity decrease of one candidate split, per output summed.  Children
/// are averaged by their weighted masses.
inline double split_impurity_decrease(const std::vector<std::vector<double>>& left_counts,
                                      const std::vector<std::vector<double>>& right_counts,
                                      Criterion criterion) {
    double decrease = 0;
    for (std::size_t o = 0; o < left_counts.size(); ++o) {
        std::vector<double> parent(left_counts[o].size());
        double wl = 0, wr = 0;
        for (std::size_t c = 0; c < parent.size(); ++c) {
            parent[c] = left_counts[o][c] + right_counts[o][c];
            wl += left_counts[o][c];
            wr += right_counts[o][c];
        }
        double total = wl + wr;
        if (total <= 0) continue;
        decrease += node_impurity(parent, criterion) -
                    (wl / total) * node_impurity(left_counts[o], criterion) -
                    (wr / total) * node_impurity(right_counts[o], criterion);
    }
    return decrease;
}

/// Index-linked tree storage.  Internal nodes route rows by
/// feature <= threshold to the left child; leaves keep the weighted class
/// counts per output.  cover is the raw training-sample count through the
/// node, kept on every node for the attribution walker.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    int depth = 0;
    double cover = 0.0;
    std::vector<double> counts;  // leaves: concatenated per-output weighted counts
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int leaf_for(const std::vector<double>& row) const {
        int i = 0;
        while (nodes[i].feature >= 0)
            i = row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return i;
    }
};

class RandomForestModel {
public:
    RandomForestModel() = default;
    RandomForestModel(ForestConfig config, std::size_t n_features,
                      std::vector<std::size_t> classes_per_output, std::vector<Tree> trees)
        : config_(std::move(config)),
          n_features_(n_features),
          classes_per_output_(std::move(classes_per_output)),
          trees_(std::move(trees)) {}

    const ForestConfig& config() const { return config_; }
    std::size_t n_features() const { return n_features_; }
    std::size_t n_outputs() const { return classes_per_output_.size(); }
    const std::vector<std::size_t>& classes_per_output() const { return classes_per_output_; }
    const std::vector<Tree>& trees() const { return trees_; }

    /// Mean over trees of the leaf's weight-adjusted class distribution.
    std::vector<std::vector<double>> predict_proba(const std::vector<double>& row) const {
        if (row.size() != n_features_)
            throw DataError("row width " + std::to_string(row.size()) + " does not match model width " +
                            std::to_string(n_features_));
        std::vector<std::vector<double>> prob(n_outputs());
        for (std::size_t o = 0; o < n_outputs(); ++o) prob[o].assign(classes_per_output_[o], 0.0);
        for (const auto& tree : trees_) {
            const auto& leaf = tree.nodes[tree.leaf_for(row)];
            std::size_t base = 0;
            for (std::size_t o = 0; o < n_outputs(); ++o) {
                double total = 0;
                for (std::size_t c = 0; c < classes_per_output_[o]; ++c) total += leaf.counts[base + c];
                for (std::size_t c = 0; c < classes_per_output_[o]; ++c)
                    prob[o][c] += leaf.counts[base + c] / total;
                base += classes_per_output_[o];
            }
        }
        for (auto& p : prob)
            for (auto& v : p) v /= static_cast<double>(trees_.size());
        return prob;
    }

    /// Argmax per output; ties go to the lowest class index.
    std::vector<int> predict(const std::vector<double>& row) const {
        auto prob = predict_proba(row);
        std::vector<int> out(prob.size());
        for (std::size_t o = 0; o < prob.size(); ++o) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < prob[o].size(); ++c)
                if (prob[o][c] > prob[o][best]) best = c;
            out[o] = static_cast<int>(best);
        }
        return out;
    }

private:
    ForestConfig config_;
    std::size_t n_features_ = 0;
    std::vector<std::size_t> classes_per_output_;
    std::vector<Tree> trees_;
};

namespace detail {

constexpr double kMinDecrease = 1e-12;

struct TreeBuilder {
    const std::vector<std::vector<double>>& rows;
    const std::vector<std::vector<int>>& targets;  // targets[r][o]
    const std::vector<std::vector<double>>& weights;  // weights[o][class]
    const std::vector<std::size_t>& classes_per_output;
    const ForestConfig& config;
    std::uint64_t tree_seed;
    std::size_t m_features;
    Tree tree;

    std::vector<std::vector<double>> weighted_counts(const std::vector<std::size_t>& samples) const {
        std::vector<std::vector<double>> counts(classes_per_output.size());
        for (std::size_t o = 0; o < counts.size(); ++o) counts[o].assign(classes_per_output[o], 0.0);
        for (auto s : samples)
            for (std::size_t o = 0; o < counts.size(); ++o)
                counts[o][targets[s][o]] += weights[o][targets[s][o]];
        return counts;
    }

    int make_leaf(const std::vector<std::size_t>& samples,
                  const std::vector<std::vector<double>>& counts, int depth) {
        TreeNode node;
        node.depth = depth;
        node.cover = static_cast<double>(samples.size());
        for (const auto& per_output : counts)
            node.counts.insert(node.counts.end(), per_output.begin(), per_output.end());
        tree.nodes.push_back(std::move(node));
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    /// path_key doubles as the node's RNG stream id: root 1, then 2k / 2k+1
    /// for the children.  The stream a node sees depends only on its
    /// position, so deepening the depth limit extends the tree in place.
    int build(std::vector<std::size_t> samples, int depth, std::uint64_t path_key) {
        auto counts = weighted_counts(samples);
        bool depth_capped = config.max_depth > 0 &&
                            depth >= static_cast<int>(config.max_depth);
        if (depth_capped || samples.size() < config.min_samples_split)
            return make_leaf(samples, counts, depth);

        Rng rng(derive_seed(tree_seed, "node", path_key));
        // partial Fisher-Yates draw of m distinct feature indices
        std::vector<std::size_t> pool(rows[0].size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        std::size_t m = std::min(m_features, pool.size());
        for (std::size_t i = 0; i < m; ++i)
            std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
        pool.resize(m);

        double best_decrease = kMinDecrease;
        int best_feature = -1;
        double best_threshold = 0;
        std::vector<std::pair<double, std::size_t>> order;
        std::vector<std::vector<double>> left(counts.size()), right(counts.size());
        for (auto f : pool) {
            order.clear();
            for (auto s : samples) order.emplace_back(rows[s][f], s);
            std::sort(order.begin(), order.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t o = 0; o < counts.size(); ++o) {
                left[o].assign(classes_per_output[o], 0.0);
                right[o] = counts[o];
            }
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                auto s = order[i].second;
                for (std::size_t o = 0; o < counts.size(); ++o) {
                    double w = weights[o][targets[s][o]];
                    left[o][targets[s][o]] += w;
                    right[o][targets[s][o]] -= w;
                }
                if (order[i].first == order[i + 1].first) continue;
                double threshold = order[i].first + (order[i + 1].first - order[i].first) / 2;
                double decrease = split_impurity_decrease(left, right, config.criterion);
                bool better = decrease > best_decrease;
                bool tie = decrease == best_decrease && best_feature >= 0;
                if (tie && (static_cast<int>(f) < best_feature ||
                            (static_cast<int>(f) == best_feature && threshold < best_threshold)))
                    better = true;
                if (better) {
                    best_decrease = decrease;
                    best_feature = static_cast<int>(f);
                    best_threshold = threshold;
                }
            }
        }
        if (best_feature < 0) return make_leaf(samples, counts, depth);

        std::vector<std::size_t> ls, rs;
        for (auto s : samples)
            (rows[s][best_feature] <= best_threshold ? ls : rs).push_back(s);
        samples.clear();
        samples.shrink_to_fit();

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        node.depth = depth;
        node.cover = static_cast<double>(ls.size() + rs.size());
        tree.nodes.push_back(std::move(node));
        int self = static_cast<int>(tree.nodes.size()) - 1;
        int left_ix = build(std::move(ls), depth + 1, path_key * 2);
        int right_ix = build(std::move(rs), depth + 1, path_key * 2 + 1);
        tree.nodes[self].left = left_ix;
        tree.nodes[self].right = right_ix;
        return self;
    }
};

}  // namespace detail

/// Trains one tree on the given sample indices (already bootstrapped when
/// the caller wants that).  Greedy CART: at each node a fresh random subset
/// of features is scanned; candidate thresholds sit halfway between
/// consecutive distinct values; equal decreases resolve to the lowest
/// feature index, then the lowest threshold.
inline Tree train_tree(const std::vector<std::vector<double>>& rows,
                       const std::vector<std::vector<int>>& targets,
                       const std::vector<std::vector<double>>& weights,
                       const std::vector<std::size_t>& classes_per_output,
                       const ForestConfig& config, std::uint64_t tree_seed,
                       const std::vector<std::size_t>& sample_indices) {
    if (rows.empty()) throw DataError("cannot train a tree on zero rows");
    std::size_t d = rows[0].size();
    std::size_t m = config.features_per_split > 0
                        ? std::min(config.features_per_split, d)
                        : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(
                              static_cast<double>(d)))));
    detail::TreeBuilder builder{rows, targets, weights, classes_per_output, config, tree_seed, m, {}};
    // nodes are appended parent-first, so the root lands at index 0
    builder.build(sample_indices, 0, 1);
    return std::move(builder.tree);
}

/// Trains the forest.  Per-tree sub-seeds are derived up front from the
/// config seed, so the trees are independent of the parallel schedule.
inline RandomForestModel train_forest(const std::vector<std::vector<double>>& rows,
                                      const std::vector<std::vector<int>>& targets,
                                      const std::vector<std::vector<double>>& weights,
                                      const std::vector<std::size_t>& classes_per_output,
                                      const ForestConfig& config, std::size_t workers = 1) {
    config.validate();
    if (rows.empty()) throw DataError("cannot train a forest on zero rows");
    if (targets.size() != rows.size()) throw DataError("targets/rows length mismatch");
    for (std::size_t o = 0; o < classes_per_output.size(); ++o)
        if (weights[o].size() != classes_per_output[o])
            throw DataError("weight vector length does not match class count");

    std::vector<Tree> trees(config.n_trees);
    parallel_for(config.n_trees, workers, [&](std::size_t t) {
        std::uint64_t tree_seed = derive_seed(config.seed, "tree", t);
        std::vector<std::size_t> samples(rows.size());
        if (config.bootstrap) {
            Rng boot(derive_seed(tree_seed, "bootstrap"));
            for (auto& s : samples) s = boot.index(rows.size());
        } else {
            for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = i;
        }
        trees[t] = train_tree(rows, targets, weights, classes_per_output, config, tree_seed, samples);
    });
    return RandomForestModel(config, rows[0].size(), classes_per_output, std::move(trees));
}

/// Single-output convenience wrappers.
inline RandomForestModel train_forest(const std::vector<std::vector<double>>& rows,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& weights, std::size_t n_classes,
                                      const ForestConfig& config, std::size_t workers = 1) {
    std::vector<std::vector<int>> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = {labels[i]};
    return train_forest(rows, targets, {weights}, {n_classes}, config, workers);
}

inline std::vector<double> predict_proba_single(const RandomForestModel& model,
                                                const std::vector<double>& row) {
    return model.predict_proba(row)[0];
}

inline int predict_single(const RandomForestModel& model, const std::vector<double>& row) {
    return model.predict(row)[0];
}

/// Mean-impurity-decrease importances: each split contributes its decrease
/// scaled by the weighted mass it acts on; per-tree totals are normalized,
/// averaged across trees, and renormalized.
inline std::vector<double> split_count_importance(const RandomForestModel& model) {
    std::vector<double> total(model.n_features(), 0.0);
    std::size_t contributing = 0;
    for (const auto& tree : model.trees()) {
        std::vector<double> imp(model.n_features(), 0.0);
        // weighted node masses are recovered from the leaf count vectors
        std::vector<double> mass(tree.nodes.size(), 0.0);
        std::vector<std::vector<double>> node_counts(tree.nodes.size());
        for (std::size_t i = tree.nodes.size(); i-- > 0;) {
            const auto& node = tree.nodes[i];
            if (node.feature < 0) {
                node_counts[i] = node.counts;
            } else {
                const auto& l = node_counts[node.left];
                const auto& r = node_counts[node.right];
                node_counts[i].resize(l.size());
                for (std::size_t c = 0; c < l.size(); ++c) node_counts[i][c] = l[c] + r[c];
            }
            for (double c : node_counts[i]) mass[i] += c;
        }
        auto impurity_of = [&](std::size_t ix) {
            double sum = 0;
            std::size_t base = 0;
            for (std::size_t o = 0; o < model.n_outputs(); ++o) {
                std::size_t k = model.classes_per_output()[o];
                std::vector<double> counts(node_counts[ix].begin() + base,
                                           node_counts[ix].begin() + base + k);
                double m = 0;
                for (double c : counts) m += c;
                double root_m = 0;
                for (std::size_t c = 0; c < k; ++c) root_m += node_counts[0][base + c];
                sum += (m / root_m) * node_impurity(counts, model.config().criterion);
                base += k;
            }
            return sum;
        };
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const auto& node = tree.nodes[i];
            if (node.feature < 0) continue;
            imp[node.feature] += impurity_of(i) - impurity_of(node.left) - impurity_of(node.right);
        }
        double sum = 0;
        for (double v : imp) sum += v;
        if (sum <= 0) continue;
        ++contributing;
        for (std::size_t f = 0; f < imp.size(); ++f) total[f] += imp[f] / sum;
    }
    if (contributing > 0) {
        double sum = 0;
        for (double v : total) sum += v;
        for (auto& v : total) v /= sum;
    }
    return total;
}

}  // namespace oaprog
