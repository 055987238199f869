#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "oaprog/forest.hpp"
#include "oaprog/metrics.hpp"
#include "oaprog/parallel.hpp"
#include "oaprog/preprocess.hpp"
#include "oaprog/rng.hpp"
#include "oaprog/strategies.hpp"

namespace oaprog {

/// Stratified fold assignment: every class is shuffled and dealt
/// round-robin from a random starting fold, so per-class fold counts never
/// differ by more than one and the remainder does not pile onto fold 0.
inline std::vector<int> stratified_kfold(const std::vector<int>& classes, std::size_t k, Rng& rng) {
    if (k < 2) throw ConfigError("stratified k-fold needs k >= 2");
    int max_class = -1;
    for (int c : classes) max_class = std::max(max_class, c);
    std::vector<int> folds(classes.size(), -1);
    for (int c = 0; c <= max_class; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == c) members.push_back(i);
        if (members.empty()) continue;
        rng.shuffle(members);
        std::size_t offset = rng.index(k);
        for (std::size_t j = 0; j < members.size(); ++j)
            folds[members[j]] = static_cast<int>((offset + j) % k);
    }
    return folds;
}

struct CvOptions {
    std::size_t n_repeats = 10;
    std::size_t k = 10;
    std::size_t n_seeds = 25;
    std::uint64_t master_seed = 0;
    std::size_t workers = 1;
    std::size_t max_fold_retries = 100;
    PreprocessPlan plan;  // fold-level fitting only; filters run upstream

    void validate() const {
        if (n_repeats == 0 || n_seeds == 0) throw ConfigError("repeats and seeds must be positive");
        if (k < 2) throw ConfigError("cross-validation needs k >= 2");
        plan.validate();
    }
};

struct PredictionEntry {
    int pred = -1;
    double p_pain = 0.0;
    double p_structure = 0.0;
};

/// Dense out-of-sample prediction store over
/// (configuration, cv repeat, model seed, instance).
struct PredictionStore {
    std::size_t n_configs = 0, n_repeats = 0, n_seeds = 0, n_instances = 0;
    std::vector<int> truth;                 // per instance
    std::vector<std::vector<int>> fold_of;  // [repeat][instance]
    std::vector<PredictionEntry> entries;
    std::size_t fold_redraws = 0;

    void init(std::size_t configs, std::size_t repeats, std::size_t seeds, std::size_t instances) {
        n_configs = configs;
        n_repeats = repeats;
        n_seeds = seeds;
        n_instances = instances;
        entries.assign(configs * repeats * seeds * instances, {});
        fold_of.assign(repeats, std::vector<int>(instances, -1));
    }

    std::size_t index(std::size_t c, std::size_t r, std::size_t s, std::size_t i) const {
        return ((c * n_repeats + r) * n_seeds + s) * n_instances + i;
    }
    PredictionEntry& at(std::size_t c, std::size_t r, std::size_t s, std::size_t i) {
        return entries[index(c, r, s, i)];
    }
    const PredictionEntry& at(std::size_t c, std::size_t r, std::size_t s, std::size_t i) const {
        return entries[index(c, r, s, i)];
    }
};

namespace detail {

inline std::vector<int> draw_complete_folds(const std::vector<int>& labels, std::size_t k,
                                            std::uint64_t master_seed, std::size_t repeat,
                                            std::size_t max_retries, std::size_t& redraws) {
    std::set<int> present(labels.begin(), labels.end());
    for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
        Rng rng(derive_seed(master_seed, "fold", repeat, attempt));
        auto folds = stratified_kfold(labels, k, rng);
        bool ok = true;
        for (std::size_t f = 0; f < k && ok; ++f) {
            std::set<int> train_classes;
            for (std::size_t i = 0; i < labels.size(); ++i)
                if (folds[i] != static_cast<int>(f)) train_classes.insert(labels[i]);
            ok = train_classes == present;
        }
        if (ok) {
            redraws += attempt;
            return folds;
        }
    }
    throw DataError("could not draw a fold partition whose training sets contain every class");
}

}  // namespace detail

/// Repeated stratified k-fold CV over one or more forest configurations.
/// Transforms are fitted once per (repeat, fold) from the training rows
/// alone and shared by every configuration and model seed; the model seeds
/// are constant across folds and repeats.
inline PredictionStore run_cv(const Dataset& ds, StrategyKind strategy,
                              const std::vector<ForestConfig>& configs, const CvOptions& opts) {
    opts.validate();
    if (configs.empty()) throw ConfigError("at least one configuration is required");
    const std::size_t n = ds.size();
    if (n == 0) throw DataError("cannot cross-validate an empty dataset");

    std::vector<int> labels;
    labels.reserve(n);
    for (auto c : ds.labels) labels.push_back(static_cast<int>(c));
    WeightContext wctx = make_weight_context(ds.labels);

    PredictionStore store;
    store.init(configs.size(), opts.n_repeats, opts.n_seeds, n);
    store.truth = labels;

    for (std::size_t r = 0; r < opts.n_repeats; ++r)
        store.fold_of[r] = detail::draw_complete_folds(labels, opts.k, opts.master_seed, r,
                                                       opts.max_fold_retries, store.fold_redraws);

    std::vector<std::uint64_t> model_seeds(opts.n_seeds);
    for (std::size_t s = 0; s < opts.n_seeds; ++s)
        model_seeds[s] = derive_seed(opts.master_seed, "model", s);

    parallel_for(opts.n_repeats * opts.k, opts.workers, [&](std::size_t item) {
        std::size_t r = item / opts.k, f = item % opts.k;
        std::vector<std::size_t> train_ix, test_ix;
        for (std::size_t i = 0; i < n; ++i)
            (store.fold_of[r][i] == static_cast<int>(f) ? test_ix : train_ix).push_back(i);
        if (test_ix.empty()) return;
        auto transform = fit_transform(ds, train_ix, opts.plan);
        auto train_rows = apply_transform_rows(transform, ds, train_ix);
        auto test_rows = apply_transform_rows(transform, ds, test_ix);
        std::vector<ProgressionClass> train_labels;
        train_labels.reserve(train_ix.size());
        for (auto i : train_ix) train_labels.push_back(ds.labels[i]);

        for (std::size_t c = 0; c < configs.size(); ++c) {
            for (std::size_t s = 0; s < opts.n_seeds; ++s) {
                ForestConfig fc = configs[c];
                fc.seed = model_seeds[s];
                auto model = train_strategy(strategy, train_rows, train_labels, fc, wctx);
                for (std::size_t t = 0; t < test_ix.size(); ++t) {
                    auto pred = predict_strategy(model, test_rows[t]);
                    store.at(c, r, s, test_ix[t]) = {static_cast<int>(pred.label), pred.p_pain,
                                                     pred.p_structure};
                }
            }
        }
    });
    return store;
}

inline PredictionStore repeated_cv(const Dataset& ds, StrategyKind strategy,
                                   const ForestConfig& config, const CvOptions& opts) {
    return run_cv(ds, strategy, {config}, opts);
}

struct ScoreSummary {
    double median_score = 0;
    double ci_lo = 0, ci_hi = 0;  // order-statistic CI over the repeat medians
    double mad = 0;               // spread of the repeat medians
    std::vector<double> repeat_medians;
    std::vector<std::vector<double>> scores;  // [repeat][seed] pooled scores
};

/// Median-of-medians scoring: pool each (repeat, seed)'s out-of-sample
/// predictions into one score, take the median across seeds per repeat,
/// then the median across repeats.
inline ScoreSummary score_configuration(const PredictionStore& store, std::size_t config) {
    ScoreSummary out;
    out.scores.resize(store.n_repeats);
    for (std::size_t r = 0; r < store.n_repeats; ++r) {
        for (std::size_t s = 0; s < store.n_seeds; ++s) {
            std::vector<int> pred(store.n_instances);
            for (std::size_t i = 0; i < store.n_instances; ++i)
                pred[i] = store.at(config, r, s, i).pred;
            out.scores[r].push_back(weighted_f1(store.truth, pred, kNumClasses));
        }
        out.repeat_medians.push_back(median(out.scores[r]));
    }
    out.median_score = median(out.repeat_medians);
    out.mad = median_absolute_deviation(out.repeat_medians);
    auto ci = binomial_ci_median(out.repeat_medians);
    out.ci_lo = ci.first;
    out.ci_hi = ci.second;
    return out;
}

/// The exhaustive tuning grid: six forest sizes, seven depth caps, both
/// split criteria (84 combinations).
inline std::vector<ForestConfig> default_tuning_grid() {
    std::vector<ForestConfig> grid;
    for (std::size_t trees : {100, 200, 400, 600, 800, 1000})
        for (std::size_t depth = 4; depth <= 10; ++depth)
            for (Criterion crit : {Criterion::gini, Criterion::entropy}) {
                ForestConfig c;
                c.n_trees = trees;
                c.max_depth = depth;
                c.criterion = crit;
                grid.push_back(c);
            }
    return grid;
}

struct TuneResult {
    std::size_t best_index = 0;
    std::vector<ForestConfig> grid;
    std::vector<ScoreSummary> summaries;
    PredictionStore store;
};

/// Grid search scored by median-of-medians.  Ties prefer the lower MAD,
/// then the shallower and smaller forest, then gini.
inline TuneResult tune_grid(const Dataset& ds, StrategyKind strategy,
                            std::vector<ForestConfig> grid, const CvOptions& opts) {
    TuneResult result;
    result.grid = std::move(grid);
    result.store = run_cv(ds, strategy, result.grid, opts);
    result.summaries.reserve(result.grid.size());
    for (std::size_t c = 0; c < result.grid.size(); ++c)
        result.summaries.push_back(score_configuration(result.store, c));

    auto depth_key = [](const ForestConfig& c) {
        return c.max_depth == 0 ? std::numeric_limits<std::size_t>::max() : c.max_depth;
    };
    auto better = [&](std::size_t a, std::size_t b) {
        const auto& sa = result.summaries[a];
        const auto& sb = result.summaries[b];
        if (sa.median_score != sb.median_score) return sa.median_score > sb.median_score;
        if (sa.mad != sb.mad) return sa.mad < sb.mad;
        const auto& ca = result.grid[a];
        const auto& cb = result.grid[b];
        if (depth_key(ca) != depth_key(cb)) return depth_key(ca) < depth_key(cb);
        if (ca.n_trees != cb.n_trees) return ca.n_trees < cb.n_trees;
        if (ca.criterion != cb.criterion) return ca.criterion == Criterion::gini;
        return false;
    };
    for (std::size_t c = 1; c < result.grid.size(); ++c)
        if (better(c, result.best_index)) result.best_index = c;
    return result;
}

struct BbcResult {
    double estimate = 0;
    double ci_lo = 0, ci_hi = 0;
    std::vector<double> oob_scores;             // one per bootstrap
    std::vector<std::size_t> winner_counts;     // per configuration
};

namespace detail {

inline double percentile(std::vector<double> sorted_values, double q) {
    std::size_t n = sorted_values.size();
    if (n == 0) throw DataError("percentile of empty vector");
    double pos = q * static_cast<double>(n - 1);
    std::size_t lo = static_cast<std::size_t>(pos);
    std::size_t hi = std::min(lo + 1, n - 1);
    double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac;
}

}  // namespace detail

/// Bootstrap bias correction over the tuning store.  Each bootstrap samples
/// instance ids with replacement (an instance carries all of its
/// repeat/seed entries), picks the best-scoring configuration on the
/// sample, and scores that winner on the instances left out of the sample.
inline BbcResult bbc_cv(const PredictionStore& store, std::size_t n_boot, std::uint64_t seed) {
    if (n_boot == 0) throw ConfigError("bootstrap count must be positive");
    const std::size_t n = store.n_instances;
    const std::size_t k = kNumClasses;

    // per (config, instance): 4x4 confusion counts pooled over repeats and seeds
    std::vector<std::uint32_t> conf(store.n_configs * n * k * k, 0);
    for (std::size_t c = 0; c < store.n_configs; ++c)
        for (std::size_t r = 0; r < store.n_repeats; ++r)
            for (std::size_t s = 0; s < store.n_seeds; ++s)
                for (std::size_t i = 0; i < n; ++i)
                    ++conf[((c * n + i) * k + store.truth[i]) * k + store.at(c, r, s, i).pred];

    auto pooled_f1 = [&](std::size_t c, const std::vector<std::uint32_t>& mult) {
        ConfusionMatrix m(k);
        for (std::size_t i = 0; i < n; ++i) {
            if (!mult[i]) continue;
            const std::uint32_t* block = &conf[(c * n + i) * k * k];
            for (std::size_t t = 0; t < k * k; ++t)
                m.counts[t] += static_cast<std::size_t>(mult[i]) * block[t];
        }
        return weighted_f1(m);
    };

    BbcResult result;
    result.winner_counts.assign(store.n_configs, 0);
    std::vector<std::uint32_t> mult(n), oob(n);
    for (std::size_t b = 0; b < n_boot; ++b) {
        bool have_oob = false;
        for (std::size_t attempt = 0; !have_oob; ++attempt) {
            Rng rng(derive_seed(seed, "boot", b, attempt));
            std::fill(mult.begin(), mult.end(), 0);
            for (std::size_t i = 0; i < n; ++i) ++mult[rng.index(n)];
            for (std::size_t i = 0; i < n; ++i) {
                oob[i] = mult[i] == 0 ? 1 : 0;
                have_oob = have_oob || oob[i];
            }
            if (attempt > 100) throw DataError("bootstrap kept covering every instance");
        }
        std::size_t winner = 0;
        double best = -1;
        for (std::size_t c = 0; c < store.n_configs; ++c) {
            double score = pooled_f1(c, mult);
            if (score > best) {
                best = score;
                winner = c;
            }
        }
        ++result.winner_counts[winner];
        result.oob_scores.push_back(pooled_f1(winner, oob));
    }
    double sum = 0;
    for (double v : result.oob_scores) sum += v;
    result.estimate = sum / static_cast<double>(n_boot);
    std::vector<double> sorted = result.oob_scores;
    std::sort(sorted.begin(), sorted.end());
    result.ci_lo = detail::percentile(sorted, 0.025);
    result.ci_hi = detail::percentile(sorted, 0.975);
    return result;
}

enum class CurveMode { full_imbalanced, balanced_downsample };

struct CurveOptions {
    CvOptions cv;
    std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    CurveMode mode = CurveMode::full_imbalanced;
    std::size_t n_samples = 11;        // balanced mode: class-balanced draws per fold
    std::size_t balanced_per_class = 0;  // 0 means the training fold's smallest class
};

struct CurvePoint {
    double fraction = 0;
    ScoreSummary summary;
    double min_score = 0, max_score = 0;  // extremes over the pooled scores
};

/// Training-set-size sweep under the same folds as repeated_cv (identical
/// master seed gives identical test sets across modes and with the plain
/// CV run).  full_imbalanced grows nested stratified subsets and keeps the
/// cost-sensitive weights; balanced_downsample instead draws class-balanced
/// training subsets (unweighted) n_samples times per fold.
inline std::vector<CurvePoint> learning_curve(const Dataset& ds, StrategyKind strategy,
                                              const ForestConfig& config, const CurveOptions& copts) {
    const CvOptions& opts = copts.cv;
    opts.validate();
    for (double f : copts.fractions)
        if (f <= 0 || f > 1) throw ConfigError("curve fractions must lie in (0,1]");
    const std::size_t n = ds.size();
    std::vector<int> labels;
    for (auto c : ds.labels) labels.push_back(static_cast<int>(c));
    WeightContext wctx = make_weight_context(ds.labels);
    std::vector<double> unit4(kNumClasses, 1.0);
    WeightContext unweighted;
    unweighted.four_class = unit4;
    for (auto& w : unweighted.one_vs_rest) w = {1.0, 1.0};
    unweighted.pain_bit = {1.0, 1.0};
    unweighted.structure_bit = {1.0, 1.0};

    std::size_t redraws = 0;
    std::vector<std::vector<int>> fold_of(opts.n_repeats);
    for (std::size_t r = 0; r < opts.n_repeats; ++r)
        fold_of[r] = detail::draw_complete_folds(labels, opts.k, opts.master_seed, r,
                                                 opts.max_fold_retries, redraws);

    const bool balanced = copts.mode == CurveMode::balanced_downsample;
    const std::size_t inner = balanced ? copts.n_samples : opts.n_seeds;
    std::vector<std::uint64_t> model_seeds(inner);
    for (std::size_t s = 0; s < inner; ++s)
        model_seeds[s] = balanced ? derive_seed(opts.master_seed, "balanced_model", s)
                                  : derive_seed(opts.master_seed, "model", s);

    // predictions[fraction][repeat][inner][instance]
    std::vector<std::vector<std::vector<std::vector<int>>>> predictions(
        copts.fractions.size(),
        std::vector<std::vector<std::vector<int>>>(
            opts.n_repeats, std::vector<std::vector<int>>(inner, std::vector<int>(n, -1))));

    parallel_for(opts.n_repeats * opts.k, opts.workers, [&](std::size_t item) {
        std::size_t r = item / opts.k, f = item % opts.k;
        std::vector<std::size_t> train_ix, test_ix;
        for (std::size_t i = 0; i < n; ++i)
            (fold_of[r][i] == static_cast<int>(f) ? test_ix : train_ix).push_back(i);
        if (test_ix.empty()) return;
        auto transform = fit_transform(ds, train_ix, opts.plan);
        auto test_rows = apply_transform_rows(transform, ds, test_ix);

        // per-class pools in a fixed shuffled order make the subsets nested
        std::array<std::vector<std::size_t>, kNumClasses> pools;
        for (auto i : train_ix) pools[labels[i]].push_back(i);
        Rng order_rng(derive_seed(opts.master_seed, "curve", r, f));
        for (auto& pool : pools) order_rng.shuffle(pool);

        for (std::size_t fx = 0; fx < copts.fractions.size(); ++fx) {
            double fraction = copts.fractions[fx];
            for (std::size_t s = 0; s < inner; ++s) {
                std::vector<std::size_t> subset;
                if (balanced) {
                    std::size_t base = copts.balanced_per_class;
                    if (base == 0) {
                        base = std::numeric_limits<std::size_t>::max();
                        for (const auto& pool : pools)
                            if (!pool.empty()) base = std::min(base, pool.size());
                    }
                    std::size_t per_class = std::max<std::size_t>(
                        1, static_cast<std::size_t>(fraction * static_cast<double>(base)));
                    Rng draw(derive_seed(opts.master_seed, "balanced_draw", r, f, fx, s));
                    for (const auto& pool : pools) {
                        if (pool.empty()) continue;
                        std::vector<std::size_t> copy = pool;
                        draw.shuffle(copy);
                        std::size_t take = std::min(per_class, copy.size());
                        subset.insert(subset.end(), copy.begin(), copy.begin() + take);
                    }
                } else {
                    for (const auto& pool : pools) {
                        if (pool.empty()) continue;
                        std::size_t take = std::max<std::size_t>(
                            1, static_cast<std::size_t>(fraction * static_cast<double>(pool.size())));
                        subset.insert(subset.end(), pool.begin(), pool.begin() + take);
                    }
                }
                // original row order keeps fraction 1.0 identical to plain CV
                std::sort(subset.begin(), subset.end());

                auto rows = apply_transform_rows(transform, ds, subset);
                std::vector<ProgressionClass> sub_labels;
                sub_labels.reserve(subset.size());
                for (auto i : subset) sub_labels.push_back(ds.labels[i]);
                ForestConfig fc = config;
                fc.seed = model_seeds[s];
                auto model =
                    train_strategy(strategy, rows, sub_labels, fc, balanced ? unweighted : wctx);
                for (std::size_t t = 0; t < test_ix.size(); ++t)
                    predictions[fx][r][s][test_ix[t]] =
                        static_cast<int>(predict_strategy(model, test_rows[t]).label);
            }
        }
    });

    std::vector<CurvePoint> out;
    for (std::size_t fx = 0; fx < copts.fractions.size(); ++fx) {
        CurvePoint point;
        point.fraction = copts.fractions[fx];
        point.min_score = 1.0;
        point.max_score = 0.0;
        point.summary.scores.resize(opts.n_repeats);
        for (std::size_t r = 0; r < opts.n_repeats; ++r) {
            for (std::size_t s = 0; s < inner; ++s) {
                double score = weighted_f1(labels, predictions[fx][r][s], kNumClasses);
                point.summary.scores[r].push_back(score);
                point.min_score = std::min(point.min_score, score);
                point.max_score = std::max(point.max_score, score);
            }
            point.summary.repeat_medians.push_back(median(point.summary.scores[r]));
        }
        point.summary.median_score = median(point.summary.repeat_medians);
        point.summary.mad = median_absolute_deviation(point.summary.repeat_medians);
        auto ci = binomial_ci_median(point.summary.repeat_medians);
        point.summary.ci_lo = ci.first;
        point.summary.ci_hi = ci.second;
        out.push_back(std::move(point));
    }
    return out;
}

/// Locates the run whose pooled score sits at the lower-middle of the
/// distribution: first the median repeat by repeat-median, then the median
/// seed within it.  Ties resolve to the lowest id.
inline std::pair<std::size_t, std::size_t> median_model(const PredictionStore& store,
                                                        std::size_t config) {
    auto summary = score_configuration(store, config);
    auto lower_middle = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[(v.size() - 1) / 2];
    };
    double target_repeat = lower_middle(summary.repeat_medians);
    std::size_t repeat = 0;
    for (std::size_t r = 0; r < store.n_repeats; ++r)
        if (summary.repeat_medians[r] == target_repeat) {
            repeat = r;
            break;
        }
    double target_seed = lower_middle(summary.scores[repeat]);
    std::size_t seed = 0;
    for (std::size_t s = 0; s < store.n_seeds; ++s)
        if (summary.scores[repeat][s] == target_seed) {
            seed = s;
            break;
        }
    return {repeat, seed};
}

}  // namespace oaprog
