#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oaprog/cohort.hpp"
#include "oaprog/common.hpp"

namespace oaprog {

/// Outcome classes: pain progression, structural progression, both, neither.
enum class ProgressionClass { N = 0, P = 1, S = 2, PS = 3 };

inline constexpr std::size_t kNumClasses = 4;

inline const char* class_name(ProgressionClass c) {
    switch (c) {
        case ProgressionClass::N: return "N";
        case ProgressionClass::P: return "P";
        case ProgressionClass::S: return "S";
        case ProgressionClass::PS: return "PS";
    }
    return "?";
}

inline std::optional<ProgressionClass> parse_class(std::string_view s) {
    if (s == "N") return ProgressionClass::N;
    if (s == "P") return ProgressionClass::P;
    if (s == "S") return ProgressionClass::S;
    if (s == "PS") return ProgressionClass::PS;
    return std::nullopt;
}

/// The class is exactly the pair of progression bits.
inline ProgressionClass class_from_bits(bool pain, bool structure) {
    if (pain && structure) return ProgressionClass::PS;
    if (pain) return ProgressionClass::P;
    if (structure) return ProgressionClass::S;
    return ProgressionClass::N;
}

inline bool pain_bit(ProgressionClass c) {
    return c == ProgressionClass::P || c == ProgressionClass::PS;
}

inline bool structure_bit(ProgressionClass c) {
    return c == ProgressionClass::S || c == ProgressionClass::PS;
}

/// How per-knee pain scores are reduced to one patient-level trajectory.
/// combined_max follows the worst reported knee at each visit; per_knee
/// requires a single knee to satisfy the criterion on its own.
enum class PainSource { combined_max, per_knee };

struct LabelOptions {
    // pain progression: any of the three clauses on the 0-100 scale
    double sustained_rise_per_year = 5.0;    // with end >= sustained_rise_floor
    double sustained_rise_floor = 40.0;
    double rapid_rise_per_year = 10.0;       // with end >= rapid_rise_floor
    double rapid_rise_floor = 35.0;
    double high_start = 40.0;                // persistently high pain
    double high_end = 40.0;
    // structural progression: annualized joint space narrowing in mm/year
    double narrowing_rate = 0.3;
    PainSource pain_source = PainSource::combined_max;
};

enum class ExclusionReason { none, pain_unavailable, structure_unavailable, both_unavailable };

inline const char* exclusion_name(ExclusionReason r) {
    switch (r) {
        case ExclusionReason::none: return "none";
        case ExclusionReason::pain_unavailable: return "pain_unavailable";
        case ExclusionReason::structure_unavailable: return "structure_unavailable";
        case ExclusionReason::both_unavailable: return "both_unavailable";
    }
    return "?";
}

enum class Knee { left, right };

struct LabelResult {
    std::optional<ProgressionClass> label;     // empty when excluded
    ExclusionReason reason = ExclusionReason::none;
    bool pain_progressed = false;
    bool structure_progressed = false;
    std::optional<Knee> structure_knee;        // knee the narrowing was measured on
    std::optional<double> pain_rise_per_year;  // audit trail
    std::optional<double> narrowing_per_year;
};

namespace detail {

inline bool pain_criterion(double start, double end, double years, const LabelOptions& o,
                           double& rise_out) {
    double rise = (end - start) / years;
    rise_out = rise;
    if (rise >= o.sustained_rise_per_year && end >= o.sustained_rise_floor) return true;
    if (rise >= o.rapid_rise_per_year && end >= o.rapid_rise_floor) return true;
    if (start >= o.high_start && end >= o.high_end) return true;
    return false;
}

inline std::optional<double> max_present(std::optional<double> a, std::optional<double> b) {
    if (a && b) return std::max(*a, *b);
    return a ? a : b;
}

}  // namespace detail

/// Applies the outcome definition to one observation window.  Windows whose
/// pain or joint-space measurements cannot support a decision are excluded
/// rather than defaulted to "no progression".
inline LabelResult label_period(const PeriodRecord& rec, const LabelOptions& opts = {}) {
    LabelResult out;
    const auto& oc = rec.outcomes;
    const double years = rec.duration_years;

    std::optional<bool> pain;
    if (opts.pain_source == PainSource::combined_max) {
        auto start = detail::max_present(oc.pain_start_left, oc.pain_start_right);
        auto end = detail::max_present(oc.pain_end_left, oc.pain_end_right);
        if (start && end) {
            double rise = 0;
            pain = detail::pain_criterion(*start, *end, years, opts, rise);
            out.pain_rise_per_year = rise;
        }
    } else {
        // a knee only counts when both its endpoints were reported
        bool any_knee = false, hit = false;
        if (oc.pain_start_left && oc.pain_end_left) {
            any_knee = true;
            double rise = 0;
            if (detail::pain_criterion(*oc.pain_start_left, *oc.pain_end_left, years, opts, rise)) {
                hit = true;
                out.pain_rise_per_year = rise;
            }
        }
        if (oc.pain_start_right && oc.pain_end_right) {
            any_knee = true;
            double rise = 0;
            if (detail::pain_criterion(*oc.pain_start_right, *oc.pain_end_right, years, opts, rise)) {
                if (!hit) out.pain_rise_per_year = rise;
                hit = true;
            }
        }
        if (any_knee) pain = hit;
    }

    // structural progression is judged on the faster-narrowing knee
    std::optional<double> narrowing;
    std::optional<Knee> knee;
    if (oc.jsw_start_left && oc.jsw_end_left) {
        narrowing = (*oc.jsw_start_left - *oc.jsw_end_left) / years;
        knee = Knee::left;
    }
    if (oc.jsw_start_right && oc.jsw_end_right) {
        double rate = (*oc.jsw_start_right - *oc.jsw_end_right) / years;
        if (!narrowing || rate > *narrowing) {  // tie keeps the left knee
            narrowing = rate;
            knee = Knee::right;
        }
    }
    std::optional<bool> structure;
    if (narrowing) {
        structure = *narrowing >= opts.narrowing_rate;
        out.narrowing_per_year = narrowing;
        out.structure_knee = knee;
    }

    if (!pain && !structure) {
        out.reason = ExclusionReason::both_unavailable;
    } else if (!pain) {
        out.reason = ExclusionReason::pain_unavailable;
    } else if (!structure) {
        out.reason = ExclusionReason::structure_unavailable;
    } else {
        out.pain_progressed = *pain;
        out.structure_progressed = *structure;
        out.label = class_from_bits(*pain, *structure);
    }
    return out;
}

/// One labeled observation window, ready for dataset assembly.
struct LabeledPeriod {
    PeriodRecord period;
    ProgressionClass label;
};

struct LabelSummary {
    std::vector<LabeledPeriod> labeled;
    std::map<ExclusionReason, std::size_t> exclusions;  // audit ledger
    std::array<std::size_t, kNumClasses> class_counts{};
};

inline LabelSummary label_periods(const std::vector<PeriodRecord>& periods,
                                  const LabelOptions& opts = {}) {
    LabelSummary out;
    for (const auto& rec : periods) {
        auto res = label_period(rec, opts);
        if (!res.label) {
            ++out.exclusions[res.reason];
            continue;
        }
        ++out.class_counts[static_cast<std::size_t>(*res.label)];
        out.labeled.push_back({rec, *res.label});
    }
    return out;
}

}  // namespace oaprog
