#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "oaprog/eval.hpp"
#include "oaprog/forest.hpp"
#include "oaprog/metrics.hpp"
#include "oaprog/strategies.hpp"

namespace oaprog {

struct RfeTrace {
    std::vector<std::size_t> elimination_order;  // first entry dropped first; ends with the survivor
    std::vector<std::size_t> subset_sizes;       // d down to 1
    std::vector<double> inner_scores;            // pooled inner-CV weighted F1 per subset size
    std::vector<std::size_t> chosen;             // feature indices of the best subset, ascending

    std::vector<std::size_t> subset_at(std::size_t size, std::size_t d) const {
        std::set<std::size_t> dropped(elimination_order.begin(),
                                      elimination_order.begin() + (d - size));
        std::vector<std::size_t> out;
        for (std::size_t f = 0; f < d; ++f)
            if (!dropped.count(f)) out.push_back(f);
        return out;
    }
};

namespace detail {

inline std::vector<std::vector<double>> restrict_columns(
    const std::vector<std::vector<double>>& rows, const std::vector<std::size_t>& cols) {
    std::vector<std::vector<double>> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out[r].reserve(cols.size());
        for (auto c : cols) out[r].push_back(rows[r][c]);
    }
    return out;
}

/// Importance of a composed strategy: the mean of its forests' normalized
/// impurity-decrease importances.
inline std::vector<double> strategy_importance(const StrategyModel& model, std::size_t width) {
    std::vector<double> total(width, 0.0);
    for (const auto& forest : model.forests) {
        auto imp = split_count_importance(forest);
        for (std::size_t f = 0; f < width; ++f) total[f] += imp[f];
    }
    for (auto& v : total) v /= static_cast<double>(model.forests.size());
    return total;
}

}  // namespace detail

/// Backward elimination on the training data alone.  Each step fits the
/// strategy in an inner stratified 3-fold CV, averages the importance
/// ranking over the inner folds, records the pooled inner score, and drops
/// the least important feature (ties drop the highest index).  The chosen
/// subset maximizes the inner score; score ties prefer fewer features.
inline RfeTrace rfe_select(const std::vector<std::vector<double>>& rows,
                           const std::vector<ProgressionClass>& labels, StrategyKind strategy,
                           const ForestConfig& config, const WeightContext& weights,
                           std::uint64_t seed, std::size_t inner_k = 3,
                           std::size_t workers = 1) {
    if (rows.empty()) throw DataError("cannot run feature elimination on zero rows");
    const std::size_t d = rows[0].size();
    if (d == 0) throw DataError("cannot run feature elimination with zero features");

    // inner folds stay fixed across steps so subset scores are comparable;
    // stratification is on the 4-class label for every strategy
    std::vector<int> labels4;
    labels4.reserve(labels.size());
    for (auto c : labels) labels4.push_back(static_cast<int>(c));
    std::size_t redraws = 0;
    auto folds = detail::draw_complete_folds(labels4, inner_k, seed, 0, 100, redraws);

    RfeTrace trace;
    std::vector<std::size_t> active(d);
    for (std::size_t f = 0; f < d; ++f) active[f] = f;

    while (!active.empty()) {
        auto sub_rows = detail::restrict_columns(rows, active);
        std::vector<double> importance(active.size(), 0.0);
        std::vector<int> pooled_pred(rows.size(), -1);

        for (std::size_t f = 0; f < inner_k; ++f) {
            std::vector<std::size_t> train_ix, test_ix;
            for (std::size_t i = 0; i < rows.size(); ++i)
                (folds[i] == static_cast<int>(f) ? test_ix : train_ix).push_back(i);
            std::vector<std::vector<double>> train_rows;
            std::vector<ProgressionClass> train_labels;
            train_rows.reserve(train_ix.size());
            for (auto i : train_ix) {
                train_rows.push_back(sub_rows[i]);
                train_labels.push_back(labels[i]);
            }
            auto model = train_strategy(strategy, train_rows, train_labels, config, weights, workers);
            auto imp = detail::strategy_importance(model, active.size());
            for (std::size_t j = 0; j < active.size(); ++j) importance[j] += imp[j];
            for (auto i : test_ix)
                pooled_pred[i] = static_cast<int>(predict_strategy(model, sub_rows[i]).label);
        }

        trace.subset_sizes.push_back(active.size());
        trace.inner_scores.push_back(weighted_f1(labels4, pooled_pred, kNumClasses));

        // lowest mean importance goes; ties drop the highest feature index
        std::size_t worst = 0;
        for (std::size_t j = 1; j < active.size(); ++j)
            if (importance[j] <= importance[worst]) worst = j;
        trace.elimination_order.push_back(active[worst]);
        active.erase(active.begin() + worst);
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < trace.subset_sizes.size(); ++i) {
        if (trace.inner_scores[i] > trace.inner_scores[best] ||
            (trace.inner_scores[i] == trace.inner_scores[best] &&
             trace.subset_sizes[i] < trace.subset_sizes[best]))
            best = i;
    }
    trace.chosen = trace.subset_at(trace.subset_sizes[best], d);
    return trace;
}

/// How often each feature (by name, since fold transforms can disagree on
/// one-hot widths) made the chosen subset across outer folds and repeats.
inline std::map<std::string, std::size_t> selection_frequency(
    const std::vector<std::pair<RfeTrace, std::vector<std::string>>>& traces_with_names) {
    std::map<std::string, std::size_t> freq;
    for (const auto& [trace, names] : traces_with_names)
        for (auto f : trace.chosen) ++freq[names[f]];
    return freq;
}

}  // namespace oaprog
