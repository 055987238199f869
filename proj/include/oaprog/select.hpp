#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "oaprog/labeling.hpp"
#include "oaprog/preprocess.hpp"

namespace oaprog {

/// Clinical inclusion inputs for one knee, read at the start of the
/// observation window.  Any field may be unreported.
struct KneeInputs {
    std::optional<bool> knee_pain;
    std::optional<bool> crepitus;
    std::optional<bool> osteophytes;
    std::optional<int> kl_grade;       // 0..4
    std::optional<double> womac_pain;  // 0..100
};

struct ConventionalInputs {
    std::optional<double> age;
    std::optional<double> stiffness_minutes;  // morning stiffness duration
    KneeInputs left, right;
};

namespace detail {

inline std::optional<bool> bool_cell(const Value& v) {
    if (is_missing(v)) return std::nullopt;
    if (is_number(v)) return as_number(v) != 0.0;
    return parse_bool(as_text(v));
}

inline std::optional<double> num_cell(const Value& v) {
    if (is_missing(v)) return std::nullopt;
    if (is_number(v)) return as_number(v);
    return parse_double(as_text(v));
}

}  // namespace detail

/// Pulls the inclusion-criteria inputs out of a dataset row via the
/// attribute roles.  Out-of-range KL grades are left unset (and therefore
/// count as unevaluable downstream).
inline ConventionalInputs conventional_inputs(const Dataset& ds, std::size_t row) {
    ConventionalInputs in;
    auto find_role = [&](AttributeRole role) -> std::optional<std::size_t> {
        for (std::size_t a = 0; a < ds.attrs.size(); ++a)
            if (ds.attrs[a].role == role) return a;
        return std::nullopt;
    };
    auto number_of = [&](AttributeRole role) -> std::optional<double> {
        auto a = find_role(role);
        return a ? detail::num_cell(ds.rows[row][*a]) : std::nullopt;
    };
    auto bool_of = [&](AttributeRole role) -> std::optional<bool> {
        auto a = find_role(role);
        return a ? detail::bool_cell(ds.rows[row][*a]) : std::nullopt;
    };
    auto kl_of = [&](AttributeRole role) -> std::optional<int> {
        auto v = number_of(role);
        if (!v || *v != static_cast<int>(*v) || *v < 0 || *v > 4) return std::nullopt;
        return static_cast<int>(*v);
    };
    in.age = number_of(AttributeRole::age);
    in.stiffness_minutes = number_of(AttributeRole::stiffness_minutes);
    in.left.knee_pain = bool_of(AttributeRole::knee_pain_left);
    in.right.knee_pain = bool_of(AttributeRole::knee_pain_right);
    in.left.crepitus = bool_of(AttributeRole::crepitus_left);
    in.right.crepitus = bool_of(AttributeRole::crepitus_right);
    in.left.osteophytes = bool_of(AttributeRole::osteophytes_left);
    in.right.osteophytes = bool_of(AttributeRole::osteophytes_right);
    in.left.kl_grade = kl_of(AttributeRole::kl_left);
    in.right.kl_grade = kl_of(AttributeRole::kl_right);
    in.left.womac_pain = number_of(AttributeRole::pain_left);
    in.right.womac_pain = number_of(AttributeRole::pain_right);
    return in;
}

enum class KneeVerdict { pass, fail, unknown };

namespace detail {

/// Three-valued evaluation of one knee: clinical criteria (pain plus one
/// of age/stiffness/crepitus/osteophytes), KL grade 1..3, and pain score
/// of at least 40.  A knee fails as soon as any present conjunct fails;
/// it passes only when everything needed was reported.
inline KneeVerdict evaluate_knee(const KneeInputs& knee, const std::optional<double>& age,
                                 const std::optional<double>& stiffness) {
    if (knee.knee_pain && !*knee.knee_pain) return KneeVerdict::fail;
    if (knee.kl_grade && (*knee.kl_grade < 1 || *knee.kl_grade > 3)) return KneeVerdict::fail;
    if (knee.womac_pain && *knee.womac_pain < 40) return KneeVerdict::fail;

    // the disjunction: true wins over missing, missing wins over false
    bool any_true = (age && *age > 50) || (stiffness && *stiffness < 30) ||
                    (knee.crepitus && *knee.crepitus) || (knee.osteophytes && *knee.osteophytes);
    bool all_present = age && stiffness && knee.crepitus && knee.osteophytes;
    if (!any_true && all_present) return KneeVerdict::fail;

    if (knee.knee_pain && knee.kl_grade && knee.womac_pain && any_true) return KneeVerdict::pass;
    return KneeVerdict::unknown;
}

}  // namespace detail

struct SelectionMask {
    std::vector<bool> selected;
    std::vector<bool> unevaluable;  // audit trail: criteria could not be decided
};

/// Conventional trial recruitment: an instance enters when either knee
/// satisfies all three criteria.  Unevaluable instances are never
/// selected but are reported separately.
inline SelectionMask conventional_select(const std::vector<ConventionalInputs>& inputs) {
    SelectionMask out;
    out.selected.reserve(inputs.size());
    out.unevaluable.reserve(inputs.size());
    for (const auto& in : inputs) {
        KneeVerdict left = detail::evaluate_knee(in.left, in.age, in.stiffness_minutes);
        KneeVerdict right = detail::evaluate_knee(in.right, in.age, in.stiffness_minutes);
        bool pass = left == KneeVerdict::pass || right == KneeVerdict::pass;
        bool unknown = !pass && (left == KneeVerdict::unknown || right == KneeVerdict::unknown);
        out.selected.push_back(pass);
        out.unevaluable.push_back(unknown);
    }
    return out;
}

/// Model-driven selection: everything predicted progressive.
inline SelectionMask ml_label_select(const std::vector<ProgressionClass>& predicted) {
    SelectionMask out;
    out.selected.reserve(predicted.size());
    for (auto c : predicted) out.selected.push_back(c != ProgressionClass::N);
    out.unevaluable.assign(predicted.size(), false);
    return out;
}

/// Probability-ranked selection, count-matched to a budget: instances are
/// sorted three ways (descending p(P)+p(S), p(S), p(P); probability ties
/// by instance id), the first list gets any remainder of the three-way
/// quota split, and duplicates are skipped while walking down each list.
inline SelectionMask ml_prob_select(const std::vector<std::pair<double, double>>& probabilities,
                                    std::size_t target_count) {
    const std::size_t n = probabilities.size();
    if (target_count > n)
        throw ConfigError("cannot select " + std::to_string(target_count) + " of " +
                          std::to_string(n) + " instances");
    auto sorted_by = [&](auto key) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            double ka = key(probabilities[a]), kb = key(probabilities[b]);
            if (ka != kb) return ka > kb;
            return a < b;
        });
        return order;
    };
    std::array<std::vector<std::size_t>, 3> lists = {
        sorted_by([](const auto& p) { return p.first + p.second; }),
        sorted_by([](const auto& p) { return p.second; }),
        sorted_by([](const auto& p) { return p.first; }),
    };
    std::array<std::size_t, 3> quota{};
    for (std::size_t l = 0; l < 3; ++l)
        quota[l] = target_count / 3 + (l < target_count % 3 ? 1 : 0);

    SelectionMask out;
    out.selected.assign(n, false);
    out.unevaluable.assign(n, false);
    std::size_t taken = 0;
    std::array<std::size_t, 3> cursor{};
    for (std::size_t l = 0; l < 3; ++l) {
        std::size_t filled = 0;
        while (filled < quota[l] && cursor[l] < n) {
            std::size_t i = lists[l][cursor[l]++];
            if (out.selected[i]) continue;
            out.selected[i] = true;
            ++filled;
            ++taken;
        }
    }
    // quotas can fall short only via exhausted lists; sweep in order to top up
    for (std::size_t l = 0; taken < target_count && l < 3; ++l) {
        while (taken < target_count && cursor[l] < n) {
            std::size_t i = lists[l][cursor[l]++];
            if (out.selected[i]) continue;
            out.selected[i] = true;
            ++taken;
        }
    }
    return out;
}

struct SelectionReport {
    std::array<std::size_t, kNumClasses> counts{};   // selected, by true class
    std::array<double, kNumClasses> shares{};        // fraction of the selection
    std::array<double, kNumClasses> recalls{};       // fraction of the class captured
    std::size_t selected_total = 0;
    std::size_t unevaluable_total = 0;
    double progressive_recall = 0;  // recall of everything that is not N
};

inline SelectionReport selection_report(const SelectionMask& mask,
                                        const std::vector<ProgressionClass>& truth) {
    if (mask.selected.size() != truth.size())
        throw DataError("selection mask and truth length mismatch");
    SelectionReport rep;
    std::array<std::size_t, kNumClasses> class_totals{};
    std::size_t progressive_total = 0, progressive_selected = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        auto c = static_cast<std::size_t>(truth[i]);
        ++class_totals[c];
        bool progressive = truth[i] != ProgressionClass::N;
        progressive_total += progressive ? 1 : 0;
        if (mask.selected[i]) {
            ++rep.counts[c];
            ++rep.selected_total;
            progressive_selected += progressive ? 1 : 0;
        }
        rep.unevaluable_total += (i < mask.unevaluable.size() && mask.unevaluable[i]) ? 1 : 0;
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        rep.shares[c] = rep.selected_total ? static_cast<double>(rep.counts[c]) / rep.selected_total : 0;
        rep.recalls[c] = class_totals[c] ? static_cast<double>(rep.counts[c]) / class_totals[c] : 0;
    }
    rep.progressive_recall =
        progressive_total ? static_cast<double>(progressive_selected) / progressive_total : 0;
    return rep;
}

}  // namespace oaprog
