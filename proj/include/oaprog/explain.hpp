#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "oaprog/forest.hpp"
#include "oaprog/strategies.hpp"

namespace oaprog {

/// Signed per-feature contributions for one instance and one scalar model
/// output, plus the cover-weighted expectation the contributions are
/// relative to.
struct ShapAttribution {
    std::vector<double> phi;
    double base_value = 0.0;
    std::string output_id;
};

namespace detail {

/// Scalar view of a leaf: the probability of class `cls` within output
/// block `output`.
inline double leaf_scalar(const TreeNode& leaf, const std::vector<std::size_t>& classes_per_output,
                          std::size_t output, std::size_t cls) {
    std::size_t base = 0;
    for (std::size_t o = 0; o < output; ++o) base += classes_per_output[o];
    double total = 0;
    for (std::size_t c = 0; c < classes_per_output[output]; ++c) total += leaf.counts[base + c];
    return leaf.counts[base + cls] / total;
}

inline void check_covers(const Tree& tree) {
    for (const auto& node : tree.nodes)
        if (node.cover <= 0)
            throw DataError("malformed model: node with zero training cover");
}

struct PathElement {
    int feature = -1;
    double zero_fraction = 0;
    double one_fraction = 0;
    double pweight = 0;
};

inline void extend_path(std::vector<PathElement>& path, double zero_fraction, double one_fraction,
                        int feature) {
    std::size_t depth = path.size();
    path.push_back({feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0});
    for (std::size_t i = depth; i-- > 0;) {
        path[i + 1].pweight += one_fraction * path[i].pweight * static_cast<double>(i + 1) /
                               static_cast<double>(depth + 1);
        path[i].pweight = zero_fraction * path[i].pweight * static_cast<double>(depth - i) /
                          static_cast<double>(depth + 1);
    }
}

inline void unwind_path(std::vector<PathElement>& path, std::size_t index) {
    std::size_t depth = path.size() - 1;
    double one_fraction = path[index].one_fraction;
    double zero_fraction = path[index].zero_fraction;
    double next_one_portion = path[depth].pweight;
    for (std::size_t i = depth; i-- > 0;) {
        if (one_fraction != 0) {
            double tmp = path[i].pweight;
            path[i].pweight = next_one_portion * static_cast<double>(depth + 1) /
                              (static_cast<double>(i + 1) * one_fraction);
            next_one_portion = tmp - path[i].pweight * zero_fraction *
                                         static_cast<double>(depth - i) /
                                         static_cast<double>(depth + 1);
        } else {
            path[i].pweight = path[i].pweight * static_cast<double>(depth + 1) /
                              (zero_fraction * static_cast<double>(depth - i));
        }
    }
    for (std::size_t i = index; i < depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop_back();
}

inline double unwound_path_sum(const std::vector<PathElement>& path, std::size_t index) {
    std::size_t depth = path.size() - 1;
    double one_fraction = path[index].one_fraction;
    double zero_fraction = path[index].zero_fraction;
    double next_one_portion = path[depth].pweight;
    double total = 0;
    if (one_fraction != 0) {
        for (std::size_t i = depth; i-- > 0;) {
            double tmp = next_one_portion / (static_cast<double>(i + 1) * one_fraction);
            total += tmp;
            next_one_portion = path[i].pweight - tmp * zero_fraction * static_cast<double>(depth - i);
        }
    } else {
        for (std::size_t i = depth; i-- > 0;) {
            total += path[i].pweight / (zero_fraction * static_cast<double>(depth - i));
        }
    }
    return total * static_cast<double>(depth + 1);
}

inline void tree_shap_recurse(const Tree& tree, const std::vector<double>& x,
                              const std::function<double(const TreeNode&)>& leaf_value,
                              std::vector<double>& phi, int node_ix,
                              std::vector<PathElement> path, double parent_zero_fraction,
                              double parent_one_fraction, int parent_feature) {
    const TreeNode& node = tree.nodes[node_ix];
    extend_path(path, parent_zero_fraction, parent_one_fraction, parent_feature);
    if (node.feature < 0) {
        double value = leaf_value(node);
        for (std::size_t i = 1; i < path.size(); ++i) {
            double w = unwound_path_sum(path, i);
            phi[path[i].feature] += w * (path[i].one_fraction - path[i].zero_fraction) * value;
        }
        return;
    }
    int hot = x[node.feature] <= node.threshold ? node.left : node.right;
    int cold = hot == node.left ? node.right : node.left;
    double hot_zero = tree.nodes[hot].cover / node.cover;
    double cold_zero = tree.nodes[cold].cover / node.cover;
    double incoming_zero = 1.0, incoming_one = 1.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
        if (path[k].feature == node.feature) {
            incoming_zero = path[k].zero_fraction;
            incoming_one = path[k].one_fraction;
            unwind_path(path, k);
            break;
        }
    }
    tree_shap_recurse(tree, x, leaf_value, phi, hot, path, hot_zero * incoming_zero, incoming_one,
                      node.feature);
    tree_shap_recurse(tree, x, leaf_value, phi, cold, path, cold_zero * incoming_zero, 0.0,
                      node.feature);
}

/// Cover-weighted expectation of the tree output with the features in
/// `fixed` forced to the instance's path and the rest marginalized.
inline double conditional_expectation(const Tree& tree, const std::vector<double>& x,
                                      const std::function<double(const TreeNode&)>& leaf_value,
                                      const std::set<int>& fixed, int node_ix) {
    const TreeNode& node = tree.nodes[node_ix];
    if (node.feature < 0) return leaf_value(node);
    if (fixed.count(node.feature)) {
        int next = x[node.feature] <= node.threshold ? node.left : node.right;
        return conditional_expectation(tree, x, leaf_value, fixed, next);
    }
    double wl = tree.nodes[node.left].cover / node.cover;
    double wr = tree.nodes[node.right].cover / node.cover;
    return wl * conditional_expectation(tree, x, leaf_value, fixed, node.left) +
           wr * conditional_expectation(tree, x, leaf_value, fixed, node.right);
}

}  // namespace detail

/// Exact Shapley attributions of a single tree under the path-dependent
/// (cover-weighted) conditional expectation.  Features the tree never
/// splits on get zero.
inline std::vector<double> tree_shap(const Tree& tree, std::size_t n_features,
                                     const std::vector<double>& x,
                                     const std::function<double(const TreeNode&)>& leaf_value) {
    detail::check_covers(tree);
    std::vector<double> phi(n_features, 0.0);
    detail::tree_shap_recurse(tree, x, leaf_value, phi, 0, {}, 1.0, 1.0, -1);
    return phi;
}

/// Cover-weighted expectation of the tree output (the attribution base).
inline double tree_expectation(const Tree& tree,
                               const std::function<double(const TreeNode&)>& leaf_value) {
    detail::check_covers(tree);
    return detail::conditional_expectation(tree, {}, leaf_value, {}, 0);
}

/// Exponential-time Shapley oracle: enumerates every subset of the
/// features the tree actually uses.  Refuses beyond 20 used features.
inline std::vector<double> brute_force_shapley(
    const Tree& tree, std::size_t n_features, const std::vector<double>& x,
    const std::function<double(const TreeNode&)>& leaf_value) {
    detail::check_covers(tree);
    std::set<int> used_set;
    for (const auto& node : tree.nodes)
        if (node.feature >= 0) used_set.insert(node.feature);
    std::vector<int> used(used_set.begin(), used_set.end());
    const std::size_t m = used.size();
    if (m > 20) throw ConfigError("brute-force Shapley limited to 20 used features");

    std::vector<double> value(std::size_t(1) << m);
    for (std::size_t mask = 0; mask < value.size(); ++mask) {
        std::set<int> fixed;
        for (std::size_t j = 0; j < m; ++j)
            if (mask & (std::size_t(1) << j)) fixed.insert(used[j]);
        value[mask] = detail::conditional_expectation(tree, x, leaf_value, fixed, 0);
    }

    std::vector<double> factorial(m + 1, 1.0);
    for (std::size_t i = 1; i <= m; ++i) factorial[i] = factorial[i - 1] * static_cast<double>(i);

    std::vector<double> phi(n_features, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double sum = 0;
        std::size_t bit = std::size_t(1) << j;
        for (std::size_t mask = 0; mask < value.size(); ++mask) {
            if (mask & bit) continue;
            std::size_t s = static_cast<std::size_t>(std::popcount(mask));
            double coef = factorial[s] * factorial[m - s - 1] / factorial[m];
            sum += coef * (value[mask | bit] - value[mask]);
        }
        phi[used[j]] = sum;
    }
    return phi;
}

/// Which scalar output of a model to attribute.
struct OutputSelector {
    std::size_t output = 0;  // output block for multi-output forests
    std::size_t cls = 1;     // class within the block (1 = positive for binary)
    std::string id = "p";
};

/// Forest attributions by linearity: the mean of per-tree Shapley vectors
/// and expectations.  Local accuracy holds against predict_proba.
inline ShapAttribution forest_shap(const RandomForestModel& model, const std::vector<double>& x,
                                   const OutputSelector& sel) {
    if (x.size() != model.n_features()) throw DataError("instance width does not match model");
    auto leaf_value = [&](const TreeNode& leaf) {
        return detail::leaf_scalar(leaf, model.classes_per_output(), sel.output, sel.cls);
    };
    ShapAttribution out;
    out.output_id = sel.id;
    out.phi.assign(model.n_features(), 0.0);
    for (const auto& tree : model.trees()) {
        auto phi = tree_shap(tree, model.n_features(), x, leaf_value);
        for (std::size_t f = 0; f < phi.size(); ++f) out.phi[f] += phi[f];
        out.base_value += tree_expectation(tree, leaf_value);
    }
    double n = static_cast<double>(model.trees().size());
    for (auto& v : out.phi) v /= n;
    out.base_value /= n;
    return out;
}

/// Attributions for the duo model's two progression-bit outputs.
inline std::pair<ShapAttribution, ShapAttribution> duo_shap(const StrategyModel& duo,
                                                            const std::vector<double>& x) {
    OutputSelector p{0, 1, "P"};
    OutputSelector s{0, 1, "S"};
    return {forest_shap(duo.pain_forest(), x, p), forest_shap(duo.structure_forest(), x, s)};
}

struct ImpactRecord {
    std::size_t instance = 0;
    double value = 0;  // raw feature value
    double phi = 0;
};

/// Beeswarm-style export: global mean-|phi| ranking plus the per-instance
/// (value, phi) scatter per feature.
struct ImpactSummary {
    std::vector<double> mean_abs_phi;               // per feature
    std::vector<std::size_t> ranking;               // feature indices, highest impact first
    std::vector<std::vector<ImpactRecord>> scatter; // per feature
};

inline ImpactSummary summarize_impact(const std::vector<ShapAttribution>& attributions,
                                      const std::vector<std::vector<double>>& instances) {
    ImpactSummary out;
    if (attributions.empty()) return out;
    std::size_t d = attributions[0].phi.size();
    out.mean_abs_phi.assign(d, 0.0);
    out.scatter.resize(d);
    for (std::size_t i = 0; i < attributions.size(); ++i) {
        for (std::size_t f = 0; f < d; ++f) {
            double phi = attributions[i].phi[f];
            out.mean_abs_phi[f] += std::abs(phi);
            out.scatter[f].push_back({i, instances[i][f], phi});
        }
    }
    for (auto& v : out.mean_abs_phi) v /= static_cast<double>(attributions.size());
    out.ranking.resize(d);
    for (std::size_t f = 0; f < d; ++f) out.ranking[f] = f;
    std::stable_sort(out.ranking.begin(), out.ranking.end(), [&](std::size_t a, std::size_t b) {
        return out.mean_abs_phi[a] > out.mean_abs_phi[b];
    });
    return out;
}

}  // namespace oaprog
