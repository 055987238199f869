#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oaprog/cohort.hpp"
#include "oaprog/labeling.hpp"
#include "oaprog/rng.hpp"

namespace oaprog {

/// Controls for the synthetic longitudinal cohort.  Trajectories are
/// linear drifts with bounded noise, with parameter ranges engineered so
/// the noise can never flip a window across any outcome boundary.
struct SynthConfig {
    std::size_t n_patients = 1000;
    std::vector<int> timepoints = {0, 2, 5, 8};
    std::size_t n_informative = 30;
    std::size_t n_noise = 70;
    std::array<double, kNumClasses> class_fractions = {0.63, 0.12, 0.20, 0.05};
    double missing_rate = 0.05;   // covariate cells only; outcomes stay observed
    double p_signal = 1.0;        // informative-feature coupling to the pain bit
    double s_signal = 1.0;        // and to the structure bit
    double replacement_rate = 0.02;
    /// Drop every outcome-derived or outcome-skewed column from the model's
    /// feature view (they stay in the table for labeling and selection).
    /// Needed for null experiments where no feature may carry label signal.
    bool exclude_outcome_features = false;
    std::uint64_t master_seed = 0;
    double calibration_tolerance = 0.015;
    std::size_t max_calibration_iters = 20;

    void validate() const {
        if (n_patients < 4) throw ConfigError("need at least 4 patients");
        if (timepoints.size() < 2) throw ConfigError("need at least 2 timepoints");
        for (std::size_t i = 1; i < timepoints.size(); ++i)
            if (timepoints[i] <= timepoints[i - 1])
                throw ConfigError("timepoints must be strictly increasing");
        double sum = 0;
        for (double f : class_fractions) {
            if (f < 0) throw ConfigError("class fractions must be non-negative");
            sum += f;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("class fractions must sum to 1");
        for (double v : {missing_rate, p_signal, s_signal, replacement_rate})
            if (v < 0 || v > 1) throw ConfigError("rates and signal strengths must lie in [0,1]");
    }
};

/// Ground-truth sidecar: one row per observation window the generator
/// expects to survive, with the label its trajectories encode.
struct SidecarRow {
    std::string patient_id;
    int start_tp = 0;
    int end_tp = 0;
    ProgressionClass intended;
};

struct SynthResult {
    CohortTable table;
    std::vector<SidecarRow> sidecar;
    std::vector<ProgressionClass> archetypes;        // per patient
    std::array<double, kNumClasses> realized_fractions{};
    std::size_t calibration_iterations = 0;
};

namespace detail {

struct PatientPlan {
    // linear trajectory parameters; left knee carries the class signal
    double pain_base_l = 0, pain_slope_l = 0;
    double pain_base_r = 0, pain_slope_r = 0;
    double jsw_start_l = 0, jsw_rate_l = 0;
    double jsw_start_r = 0, jsw_rate_r = 0;
    double z_pain = 0, z_structure = 0;  // latent propensities the features see
    double age_base = 0, stiffness = 0;
    int crepitus_l = 0, crepitus_r = 0;
    int osteophytes_l = 0, osteophytes_r = 0;
    int kl_l = 0, kl_r = 0;
    int site = 0;
    int replaced_at = -1;  // timepoint value, -1 for never
};

/// Draws one patient's trajectory plan.  The margins below keep every
/// window's label invariant under the emission noise (pain +-1, JSW
/// +-0.05): progressing pain clears its thresholds by more than the noise
/// can destroy, non-progressing pain stays below 35 - noise, and the same
/// for the 0.3 mm/year narrowing boundary.
inline PatientPlan draw_plan(ProgressionClass archetype, Rng& rng, const SynthConfig& cfg) {
    PatientPlan plan;
    const double t_last = cfg.timepoints.back();
    const bool p_bit = pain_bit(archetype);
    const bool s_bit = structure_bit(archetype);

    if (p_bit) {
        if (rng.unit() < 0.5) {
            // rising: slope clears 5/year even after noise, ends high early
            plan.pain_base_l = rng.uniform(29, 34);
            plan.pain_slope_l = rng.uniform(6.5, 7.5);
        } else {
            // persistently high with a non-negative drift
            plan.pain_base_l = rng.uniform(42, 70);
            plan.pain_slope_l = rng.uniform(0.0, 1.0);
        }
    } else if (rng.unit() < 0.15) {
        // regressor: starts in the qualifying range, drops out fast enough
        // that no window ends high
        plan.pain_base_l = rng.uniform(41, 46);
        plan.pain_slope_l = (37.5 - plan.pain_base_l) / 2 - rng.uniform(0.0, 0.5);
    } else {
        plan.pain_base_l = rng.uniform(5, 30);
        double lo = std::max(-1.5, -plan.pain_base_l / t_last);
        double hi = std::min(1.5, (33 - plan.pain_base_l) / t_last);
        plan.pain_slope_l = rng.uniform(lo, hi);
    }
    plan.pain_base_r = rng.uniform(0, 25);
    {
        double lo = std::max(-0.5, -plan.pain_base_r / t_last);
        double hi = std::min(0.5, (25 - plan.pain_base_r) / t_last);
        plan.pain_slope_r = rng.uniform(lo, hi);
    }

    if (s_bit) {
        plan.jsw_start_l = rng.uniform(4.5, 6.5);
        plan.jsw_rate_l = rng.uniform(0.38, std::min(0.65, (plan.jsw_start_l - 0.5) / t_last));
    } else {
        plan.jsw_start_l = rng.uniform(3.5, 6.5);
        plan.jsw_rate_l = rng.uniform(0.0, std::min(0.18, (plan.jsw_start_l - 0.5) / t_last));
    }
    plan.jsw_start_r = rng.uniform(3.5, 6.5);
    plan.jsw_rate_r = rng.uniform(0.0, std::min(0.18, (plan.jsw_start_r - 0.5) / t_last));

    plan.z_pain = (p_bit ? 1.0 : 0.0) + rng.uniform(-0.2, 0.2);
    plan.z_structure = (s_bit ? 1.0 : 0.0) + rng.uniform(-0.2, 0.2);

    plan.age_base = rng.uniform(40, 70);
    plan.stiffness = rng.uniform(0, 60);
    bool progressive = archetype != ProgressionClass::N;
    plan.crepitus_l = rng.unit() < (progressive ? 0.6 : 0.3) ? 1 : 0;
    plan.crepitus_r = rng.unit() < 0.3 ? 1 : 0;
    plan.osteophytes_l = rng.unit() < (s_bit ? 0.6 : 0.25) ? 1 : 0;
    plan.osteophytes_r = rng.unit() < 0.25 ? 1 : 0;
    auto draw_kl = [&](bool structural) {
        double u = rng.unit();
        if (structural) {
            if (u < 0.15) return 1;
            if (u < 0.55) return 2;
            if (u < 0.90) return 3;
            return 4;
        }
        if (u < 0.25) return 0;
        if (u < 0.60) return 1;
        if (u < 0.85) return 2;
        if (u < 0.95) return 3;
        return 4;
    };
    plan.kl_l = draw_kl(s_bit);
    plan.kl_r = draw_kl(false);
    plan.site = static_cast<int>(rng.index(4));

    double repl_chance = (s_bit ? 2.5 : 0.5) * cfg.replacement_rate;
    if (cfg.timepoints.size() > 2 && rng.unit() < repl_chance) {
        std::size_t ix = 2 + rng.index(cfg.timepoints.size() - 2);
        plan.replaced_at = cfg.timepoints[ix];
    }
    return plan;
}

/// Integer class counts from fractions by largest remainder; every class
/// with positive target mass keeps at least one patient.
inline std::array<std::size_t, kNumClasses> quota_counts(
    const std::array<double, kNumClasses>& fractions, std::size_t n) {
    std::array<std::size_t, kNumClasses> counts{};
    std::array<double, kNumClasses> remainders{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double exact = fractions[c] * static_cast<double>(n);
        counts[c] = static_cast<std::size_t>(exact);
        remainders[c] = exact - static_cast<double>(counts[c]);
        assigned += counts[c];
    }
    while (assigned < n) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < kNumClasses; ++c)
            if (remainders[c] > remainders[best]) best = c;
        ++counts[best];
        remainders[best] = -1;
        ++assigned;
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (fractions[c] <= 0 || counts[c] > 0) continue;
        std::size_t donor = 0;
        for (std::size_t d = 1; d < kNumClasses; ++d)
            if (counts[d] > counts[donor]) donor = d;
        --counts[donor];
        ++counts[c];
    }
    return counts;
}

inline std::vector<AttributeMeta> synth_attributes(const SynthConfig& cfg) {
    std::vector<AttributeMeta> attrs;
    auto add = [&](std::string name, AttributeKind kind, AttributeRole role, bool fill,
                   bool outcome_linked) {
        AttributeMeta m;
        m.name = std::move(name);
        m.kind = kind;
        m.role = role;
        m.fill_forward = fill;
        m.excluded = outcome_linked && cfg.exclude_outcome_features;
        attrs.push_back(std::move(m));
    };
    add("womac_pain_left", AttributeKind::continuous, AttributeRole::pain_left, false, true);
    add("womac_pain_right", AttributeKind::continuous, AttributeRole::pain_right, false, true);
    add("min_jsw_left", AttributeKind::continuous, AttributeRole::jsw_left, false, true);
    add("min_jsw_right", AttributeKind::continuous, AttributeRole::jsw_right, false, true);
    add("knee_replaced", AttributeKind::ordinal, AttributeRole::replacement, false, true);
    add("age", AttributeKind::continuous, AttributeRole::age, true, false);
    add("stiffness_minutes", AttributeKind::continuous, AttributeRole::stiffness_minutes, true, false);
    add("knee_pain_left", AttributeKind::ordinal, AttributeRole::knee_pain_left, false, true);
    add("knee_pain_right", AttributeKind::ordinal, AttributeRole::knee_pain_right, false, true);
    add("crepitus_left", AttributeKind::ordinal, AttributeRole::crepitus_left, true, true);
    add("crepitus_right", AttributeKind::ordinal, AttributeRole::crepitus_right, true, true);
    add("osteophytes_left", AttributeKind::ordinal, AttributeRole::osteophytes_left, true, true);
    add("osteophytes_right", AttributeKind::ordinal, AttributeRole::osteophytes_right, true, true);
    add("kl_grade_left", AttributeKind::ordinal, AttributeRole::kl_left, true, true);
    add("kl_grade_right", AttributeKind::ordinal, AttributeRole::kl_right, true, true);
    add("site", AttributeKind::categorical, AttributeRole::none, false, false);
    auto pad = [](std::size_t v) {
        std::string s = std::to_string(v);
        return s.size() < 2 ? "0" + s : s;
    };
    for (std::size_t k = 0; k < cfg.n_informative; ++k)
        add("inf_" + pad(k), AttributeKind::continuous, AttributeRole::none, false, false);
    for (std::size_t k = 0; k < cfg.n_noise; ++k)
        add("noise_" + pad(k), AttributeKind::continuous, AttributeRole::none, false, false);
    return attrs;
}

/// The outcome criterion re-stated inline (kept independent of the
/// labeling module on purpose: the sidecar is its oracle, not its mirror).
inline ProgressionClass intended_label(double ps_l, double pe_l, double ps_r, double pe_r,
                                       double js_l, double je_l, double js_r, double je_r,
                                       double years) {
    double ps = std::max(ps_l, ps_r), pe = std::max(pe_l, pe_r);
    double rise = (pe - ps) / years;
    bool p = (rise >= 5 && pe >= 40) || (rise >= 10 && pe >= 35) || (ps >= 40 && pe >= 40);
    double narrowing = std::max((js_l - je_l) / years, (js_r - je_r) / years);
    bool s = narrowing >= 0.3;
    return class_from_bits(p, s);
}

struct Emission {
    CohortTable table;
    std::vector<SidecarRow> sidecar;
};

inline Emission emit_cohort(const SynthConfig& cfg,
                            const std::vector<ProgressionClass>& archetypes) {
    const std::size_t n = cfg.n_patients;
    const std::size_t t_count = cfg.timepoints.size();
    auto attrs = synth_attributes(cfg);
    const std::size_t n_fixed = 16;

    std::vector<std::string> ids(n);
    for (std::size_t p = 0; p < n; ++p) {
        std::string num = std::to_string(p + 1);
        ids[p] = "SYN" + std::string(num.size() < 6 ? 6 - num.size() : 0, '0') + num;
    }
    CohortTable table(ids, cfg.timepoints, attrs);

    std::vector<double> inf_gain(cfg.n_informative);
    for (std::size_t k = 0; k < cfg.n_informative; ++k) {
        Rng frng(derive_seed(cfg.master_seed, "feature", k));
        inf_gain[k] = frng.uniform(0.8, 1.2);
    }
    const char* sites[4] = {"A", "B", "C", "D"};

    Emission out{std::move(table), {}};
    for (std::size_t p = 0; p < n; ++p) {
        Rng rng(derive_seed(cfg.master_seed, "patient", p));
        PatientPlan plan = draw_plan(archetypes[p], rng, cfg);

        // clean endpoint values drive the sidecar; noisy ones fill the table
        std::vector<double> pain_l(t_count), pain_r(t_count), jsw_l(t_count), jsw_r(t_count);
        for (std::size_t t = 0; t < t_count; ++t) {
            double years = cfg.timepoints[t];
            pain_l[t] = std::clamp(plan.pain_base_l + plan.pain_slope_l * years +
                                       rng.uniform(-1, 1), 0.0, 100.0);
            pain_r[t] = std::clamp(plan.pain_base_r + plan.pain_slope_r * years +
                                       rng.uniform(-1, 1), 0.0, 100.0);
            jsw_l[t] = std::max(0.3, plan.jsw_start_l - plan.jsw_rate_l * years +
                                         rng.uniform(-0.05, 0.05));
            jsw_r[t] = std::max(0.3, plan.jsw_start_r - plan.jsw_rate_r * years +
                                         rng.uniform(-0.05, 0.05));
        }

        for (std::size_t t = 0; t < t_count; ++t) {
            int year = cfg.timepoints[t];
            double age = plan.age_base + year;
            int replaced = plan.replaced_at >= 0 && year >= plan.replaced_at ? 1 : 0;
            std::vector<Value> row(out.table.n_attributes());
            row[0] = Value(pain_l[t]);
            row[1] = Value(pain_r[t]);
            row[2] = Value(jsw_l[t]);
            row[3] = Value(jsw_r[t]);
            row[4] = Value(static_cast<double>(replaced));
            row[5] = Value(age);
            row[6] = Value(plan.stiffness);
            row[7] = Value(pain_l[t] >= 20 ? 1.0 : 0.0);
            row[8] = Value(pain_r[t] >= 20 ? 1.0 : 0.0);
            row[9] = Value(static_cast<double>(plan.crepitus_l));
            row[10] = Value(static_cast<double>(plan.crepitus_r));
            row[11] = Value(static_cast<double>(plan.osteophytes_l));
            row[12] = Value(static_cast<double>(plan.osteophytes_r));
            row[13] = Value(static_cast<double>(plan.kl_l));
            row[14] = Value(static_cast<double>(plan.kl_r));
            row[15] = Value(std::string(sites[plan.site]));
            for (std::size_t k = 0; k < cfg.n_informative; ++k) {
                double signal = k % 2 == 0 ? cfg.p_signal * inf_gain[k] * plan.z_pain
                                           : cfg.s_signal * inf_gain[k] * plan.z_structure;
                row[n_fixed + k] = Value(signal + rng.uniform(-0.5, 0.5));
            }
            for (std::size_t k = 0; k < cfg.n_noise; ++k)
                row[n_fixed + cfg.n_informative + k] = Value(rng.unit());

            // missingness coins are drawn unconditionally so the rate does
            // not perturb the value stream; outcomes and the replacement
            // flag stay fully observed
            for (std::size_t a = 0; a < out.table.n_attributes(); ++a) {
                bool coin = rng.unit() < cfg.missing_rate;
                if (a <= 4) continue;
                if (coin) row[a] = Value();
            }
            for (std::size_t a = 0; a < out.table.n_attributes(); ++a)
                out.table.set_cell(p, t, a, std::move(row[a]));
        }

        for (std::size_t i = 0; i < t_count; ++i) {
            for (std::size_t j = i + 1; j < t_count; ++j) {
                int start = cfg.timepoints[i], end = cfg.timepoints[j];
                if (end - start < 2) continue;
                if (plan.replaced_at >= 0 && end >= plan.replaced_at) continue;
                double years = end - start;
                out.sidecar.push_back(
                    {ids[p], start, end,
                     intended_label(pain_l[i], pain_l[j], pain_r[i], pain_r[j], jsw_l[i], jsw_l[j],
                                    jsw_r[i], jsw_r[j], years)});
            }
        }
    }
    return out;
}

}  // namespace detail

/// Generates the cohort, iterating the per-class patient quotas until the
/// labeled window fractions land within tolerance of the target (window
/// counts per patient vary with replacements, so quotas need adjusting).
inline SynthResult generate_cohort(const SynthConfig& cfg) {
    cfg.validate();
    std::array<double, kNumClasses> adjusted = cfg.class_fractions;
    SynthResult best;
    double best_dev = 1e9;

    for (std::size_t iter = 0; iter < cfg.max_calibration_iters; ++iter) {
        auto counts = detail::quota_counts(adjusted, cfg.n_patients);
        std::vector<ProgressionClass> archetypes;
        archetypes.reserve(cfg.n_patients);
        for (std::size_t c = 0; c < kNumClasses; ++c)
            archetypes.insert(archetypes.end(), counts[c], static_cast<ProgressionClass>(c));
        Rng shuffle_rng(derive_seed(cfg.master_seed, "assign"));
        shuffle_rng.shuffle(archetypes);

        auto emission = detail::emit_cohort(cfg, archetypes);
        std::array<std::size_t, kNumClasses> labeled{};
        for (const auto& row : emission.sidecar) ++labeled[static_cast<std::size_t>(row.intended)];
        std::size_t total = emission.sidecar.size();
        if (total == 0) throw DataError("generator produced no observation windows");

        std::array<double, kNumClasses> realized{};
        double dev = 0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            realized[c] = static_cast<double>(labeled[c]) / total;
            dev = std::max(dev, std::abs(realized[c] - cfg.class_fractions[c]));
        }
        if (dev < best_dev) {
            best_dev = dev;
            best.table = std::move(emission.table);
            best.sidecar = std::move(emission.sidecar);
            best.archetypes = std::move(archetypes);
            best.realized_fractions = realized;
        }
        best.calibration_iterations = iter + 1;
        if (best_dev <= cfg.calibration_tolerance) break;

        for (std::size_t c = 0; c < kNumClasses; ++c)
            adjusted[c] *= cfg.class_fractions[c] / std::max(realized[c], 1e-6);
        double sum = 0;
        for (double f : adjusted) sum += f;
        for (auto& f : adjusted) f /= sum;
    }
    return best;
}

/// The sidecar as a CSV table for the CLI.
inline CsvTable sidecar_table(const SynthResult& result) {
    CsvTable csv;
    csv.header = {"patient", "start_timepoint", "end_timepoint", "intended_label"};
    for (const auto& row : result.sidecar)
        csv.rows.push_back({row.patient_id, std::to_string(row.start_tp),
                            std::to_string(row.end_tp), class_name(row.intended)});
    return csv;
}

}  // namespace oaprog
