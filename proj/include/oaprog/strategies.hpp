#pragma once

#include <array>
#include <string>
#include <vector>

#include "oaprog/forest.hpp"
#include "oaprog/labeling.hpp"

namespace oaprog {

/// How the 4-class problem is decomposed into forests.
enum class StrategyKind { single, one_vs_rest, multilabel, duo };

inline const char* strategy_name(StrategyKind k) {
    switch (k) {
        case StrategyKind::single: return "single";
        case StrategyKind::one_vs_rest: return "one_vs_rest";
        case StrategyKind::multilabel: return "multilabel";
        case StrategyKind::duo: return "duo";
    }
    return "?";
}

inline std::optional<StrategyKind> parse_strategy(std::string_view s) {
    if (s == "single") return StrategyKind::single;
    if (s == "one_vs_rest") return StrategyKind::one_vs_rest;
    if (s == "multilabel") return StrategyKind::multilabel;
    if (s == "duo") return StrategyKind::duo;
    return std::nullopt;
}

/// Cost-sensitivity is anchored to the full dataset: every decomposition
/// reuses weights computed from the complete label distribution, not from
/// whatever subset a training fold happens to contain.
struct WeightContext {
    std::vector<double> four_class;                   // N, P, S, PS
    std::array<std::vector<double>, kNumClasses> one_vs_rest;  // (rest, class c)
    std::vector<double> pain_bit, structure_bit;      // (negative, positive)
};

inline WeightContext make_weight_context(const std::vector<ProgressionClass>& full_labels) {
    WeightContext ctx;
    std::vector<int> four;
    four.reserve(full_labels.size());
    for (auto c : full_labels) four.push_back(static_cast<int>(c));
    ctx.four_class = class_weights(four, kNumClasses);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::vector<int> bin;
        bin.reserve(full_labels.size());
        for (auto l : full_labels) bin.push_back(static_cast<int>(l) == static_cast<int>(c) ? 1 : 0);
        ctx.one_vs_rest[c] = class_weights(bin, 2);
    }
    std::vector<int> p_bits, s_bits;
    for (auto l : full_labels) {
        p_bits.push_back(pain_bit(l) ? 1 : 0);
        s_bits.push_back(structure_bit(l) ? 1 : 0);
    }
    ctx.pain_bit = class_weights(p_bits, 2);
    ctx.structure_bit = class_weights(s_bits, 2);
    return ctx;
}

/// A trained decomposition.  Sub-forest seeds derive from the config seed,
/// so sibling forests never share bootstrap streams.
struct StrategyModel {
    StrategyKind kind = StrategyKind::single;
    std::vector<RandomForestModel> forests;
    // single: one 4-class forest
    // one_vs_rest: four binary forests in class order N,P,S,PS
    // multilabel: one 2-output forest over (pain bit, structure bit)
    // duo: pain forest then structure forest

    const RandomForestModel& pain_forest() const { return forests[0]; }
    const RandomForestModel& structure_forest() const { return forests[1]; }
};

struct StrategyPrediction {
    ProgressionClass label = ProgressionClass::N;
    std::array<double, kNumClasses> prob4{};  // N, P, S, PS
    double p_pain = 0.0;       // probability of the pain progression bit
    double p_structure = 0.0;  // probability of the structural progression bit
};

namespace detail {

inline void require_bit_varies(const std::vector<int>& bits, const std::string& name) {
    bool has0 = false, has1 = false;
    for (int b : bits) (b ? has1 : has0) = true;
    if (!has0 || !has1)
        throw DataError(name + " is constant in the training data; a binary model cannot be fit");
}

}  // namespace detail

inline StrategyModel train_strategy(StrategyKind kind, const std::vector<std::vector<double>>& rows,
                                    const std::vector<ProgressionClass>& labels,
                                    const ForestConfig& config, const WeightContext& weights,
                                    std::size_t workers = 1) {
    StrategyModel model;
    model.kind = kind;
    switch (kind) {
        case StrategyKind::single: {
            std::vector<int> y;
            y.reserve(labels.size());
            for (auto c : labels) y.push_back(static_cast<int>(c));
            model.forests.push_back(
                train_forest(rows, y, weights.four_class, kNumClasses, config, workers));
            break;
        }
        case StrategyKind::one_vs_rest: {
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                std::vector<int> y;
                y.reserve(labels.size());
                for (auto l : labels)
                    y.push_back(static_cast<int>(l) == static_cast<int>(c) ? 1 : 0);
                detail::require_bit_varies(
                    y, std::string("the ") + class_name(static_cast<ProgressionClass>(c)) +
                           "-vs-rest label");
                ForestConfig sub = config;
                sub.seed = derive_seed(config.seed, "ovr", c);
                model.forests.push_back(train_forest(rows, y, weights.one_vs_rest[c], 2, sub, workers));
            }
            break;
        }
        case StrategyKind::multilabel: {
            std::vector<std::vector<int>> targets(labels.size());
            std::vector<int> p_bits, s_bits;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                int p = pain_bit(labels[i]) ? 1 : 0;
                int s = structure_bit(labels[i]) ? 1 : 0;
                targets[i] = {p, s};
                p_bits.push_back(p);
                s_bits.push_back(s);
            }
            detail::require_bit_varies(p_bits, "the pain progression bit");
            detail::require_bit_varies(s_bits, "the structural progression bit");
            model.forests.push_back(train_forest(rows, targets,
                                                 {weights.pain_bit, weights.structure_bit}, {2, 2},
                                                 config, workers));
            break;
        }
        case StrategyKind::duo: {
            std::vector<int> p_bits, s_bits;
            for (auto l : labels) {
                p_bits.push_back(pain_bit(l) ? 1 : 0);
                s_bits.push_back(structure_bit(l) ? 1 : 0);
            }
            detail::require_bit_varies(p_bits, "the pain progression bit");
            detail::require_bit_varies(s_bits, "the structural progression bit");
            ForestConfig p_cfg = config;
            p_cfg.seed = derive_seed(config.seed, "pain");
            ForestConfig s_cfg = config;
            s_cfg.seed = derive_seed(config.seed, "structure");
            model.forests.push_back(train_forest(rows, p_bits, weights.pain_bit, 2, p_cfg, workers));
            model.forests.push_back(
                train_forest(rows, s_bits, weights.structure_bit, 2, s_cfg, workers));
            break;
        }
    }
    return model;
}

/// Independent bit probabilities of the duo model.
inline std::pair<double, double> predict_duo_probabilities(const StrategyModel& duo,
                                                           const std::vector<double>& row) {
    return {predict_proba_single(duo.pain_forest(), row)[1],
            predict_proba_single(duo.structure_forest(), row)[1]};
}

/// Maps any strategy's raw outputs onto a common shape: a 4-class label, a
/// 4-class distribution, and the two progression-bit probabilities.  Bit
/// thresholds sit at 0.5 with ties positive.
inline StrategyPrediction predict_strategy(const StrategyModel& model,
                                           const std::vector<double>& row) {
    StrategyPrediction out;
    auto from_bits = [&](double p_pain, double p_structure) {
        out.p_pain = p_pain;
        out.p_structure = p_structure;
        out.label = class_from_bits(p_pain >= 0.5, p_structure >= 0.5);
        out.prob4[0] = (1 - p_pain) * (1 - p_structure);
        out.prob4[1] = p_pain * (1 - p_structure);
        out.prob4[2] = (1 - p_pain) * p_structure;
        out.prob4[3] = p_pain * p_structure;
    };
    switch (model.kind) {
        case StrategyKind::single: {
            auto prob = predict_proba_single(model.forests[0], row);
            std::copy(prob.begin(), prob.end(), out.prob4.begin());
            std::size_t best = 0;
            for (std::size_t c = 1; c < kNumClasses; ++c)
                if (out.prob4[c] > out.prob4[best]) best = c;
            out.label = static_cast<ProgressionClass>(best);
            out.p_pain = out.prob4[1] + out.prob4[3];
            out.p_structure = out.prob4[2] + out.prob4[3];
            break;
        }
        case StrategyKind::one_vs_rest: {
            std::array<double, kNumClasses> positives{};
            for (std::size_t c = 0; c < kNumClasses; ++c)
                positives[c] = predict_proba_single(model.forests[c], row)[1];
            std::size_t best = 0;
            double sum = 0;
            for (std::size_t c = 0; c < kNumClasses; ++c) {
                if (positives[c] > positives[best]) best = c;
                sum += positives[c];
            }
            out.label = static_cast<ProgressionClass>(best);
            for (std::size_t c = 0; c < kNumClasses; ++c)
                out.prob4[c] = sum > 0 ? positives[c] / sum : 1.0 / kNumClasses;
            out.p_pain = out.prob4[1] + out.prob4[3];
            out.p_structure = out.prob4[2] + out.prob4[3];
            break;
        }
        case StrategyKind::multilabel: {
            auto prob = model.forests[0].predict_proba(row);
            from_bits(prob[0][1], prob[1][1]);
            break;
        }
        case StrategyKind::duo: {
            auto [p, s] = predict_duo_probabilities(model, row);
            from_bits(p, s);
            break;
        }
    }
    return out;
}

}  // namespace oaprog
