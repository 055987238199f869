#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "oaprog/labeling.hpp"
#include "oaprog/synth.hpp"

using namespace oaprog;

namespace {

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.n_patients = 120;
    cfg.timepoints = {0, 2, 5, 8};
    cfg.n_informative = 6;
    cfg.n_noise = 6;
    cfg.master_seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("configuration validation rejects degenerate requests") {
    SynthConfig cfg;
    cfg.n_patients = 3;
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.timepoints = {0};
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
    cfg.timepoints = {0, 2, 2};
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.class_fractions = {0.5, 0.5, 0.5, 0.5};
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
    cfg.class_fractions = {1.2, -0.2, 0.0, 0.0};
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.missing_rate = 1.5;
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
    cfg = SynthConfig{};
    cfg.p_signal = -0.1;
    CHECK_THROWS_AS(generate_cohort(cfg), ConfigError);
}

TEST_CASE("class quotas follow the largest-remainder rule") {
    std::array<double, 4> fractions{0.63, 0.12, 0.20, 0.05};
    CHECK(detail::quota_counts(fractions, 100) == std::array<std::size_t, 4>{63, 12, 20, 5});
    // 10 patients: floors {6,1,2,0}, the 0.5 remainder wins the leftover slot
    CHECK(detail::quota_counts(fractions, 10) == std::array<std::size_t, 4>{6, 1, 2, 1});
}

TEST_CASE("every class with positive mass keeps at least one patient") {
    std::array<double, 4> fractions{0.97, 0.01, 0.01, 0.01};
    CHECK(detail::quota_counts(fractions, 4) == std::array<std::size_t, 4>{1, 1, 1, 1});
    std::array<double, 4> two_class{0.5, 0.5, 0.0, 0.0};
    CHECK(detail::quota_counts(two_class, 10) == std::array<std::size_t, 4>{5, 5, 0, 0});
}

TEST_CASE("generation is reproducible from the master seed") {
    auto cfg = small_config();
    auto a = generate_cohort(cfg);
    auto b = generate_cohort(cfg);
    REQUIRE(a.archetypes == b.archetypes);
    REQUIRE(a.sidecar.size() == b.sidecar.size());
    for (std::size_t i = 0; i < a.sidecar.size(); ++i) {
        CHECK(a.sidecar[i].patient_id == b.sidecar[i].patient_id);
        CHECK(a.sidecar[i].start_tp == b.sidecar[i].start_tp);
        CHECK(a.sidecar[i].end_tp == b.sidecar[i].end_tp);
        CHECK(a.sidecar[i].intended == b.sidecar[i].intended);
    }
    CHECK(a.realized_fractions == b.realized_fractions);
    CHECK(a.calibration_iterations == b.calibration_iterations);
    REQUIRE(a.table.n_patients() == b.table.n_patients());
    for (std::size_t p = 0; p < a.table.n_patients(); ++p)
        for (std::size_t t = 0; t < a.table.n_timepoints(); ++t)
            for (std::size_t at = 0; at < a.table.n_attributes(); ++at)
                REQUIRE(a.table.cell(p, t, at) == b.table.cell(p, t, at));

    auto cfg2 = cfg;
    cfg2.master_seed = 8;
    auto c = generate_cohort(cfg2);
    CHECK(c.archetypes != a.archetypes);  // a different cohort, not a relabeling
}

TEST_CASE("the table shape and naming match the request") {
    auto cfg = small_config();
    auto result = generate_cohort(cfg);
    const auto& table = result.table;
    CHECK(table.n_patients() == cfg.n_patients);
    CHECK(table.timepoints() == cfg.timepoints);
    CHECK(table.n_attributes() == 16 + cfg.n_informative + cfg.n_noise);
    CHECK(table.patients().front() == "SYN000001");
    CHECK(table.patients().back() == "SYN000120");
    CHECK(table.attributes()[0].name == "womac_pain_left");
    CHECK(table.attributes()[16].name == "inf_00");
    CHECK(table.attributes()[16 + cfg.n_informative].name == "noise_00");
    CHECK(result.archetypes.size() == cfg.n_patients);
    double total = 0;
    for (double f : result.realized_fractions) total += f;
    CHECK(std::abs(total - 1.0) < 1e-9);
}

TEST_CASE("labeling the generated table reproduces the sidecar exactly") {
    auto cfg = small_config();
    cfg.replacement_rate = 0.2;  // force some windows out via replacement
    auto result = generate_cohort(cfg);

    auto events = replacement_events(result.table);
    auto build = build_periods(result.table, events);
    CHECK(build.excluded_after_replacement > 0);
    REQUIRE(build.periods.size() == result.sidecar.size());

    auto summary = label_periods(build.periods);
    REQUIRE(summary.exclusions.empty());  // outcomes are always observed
    REQUIRE(summary.labeled.size() == result.sidecar.size());
    for (std::size_t i = 0; i < summary.labeled.size(); ++i) {
        const auto& got = summary.labeled[i];
        const auto& want = result.sidecar[i];
        REQUIRE(got.period.patient_id == want.patient_id);
        REQUIRE(got.period.start_tp == want.start_tp);
        REQUIRE(got.period.end_tp == want.end_tp);
        REQUIRE(got.label == want.intended);
    }
}

TEST_CASE("realized fractions land near the target profile") {
    auto cfg = small_config();
    cfg.n_patients = 400;
    auto result = generate_cohort(cfg);
    for (std::size_t c = 0; c < kNumClasses; ++c)
        CHECK(std::abs(result.realized_fractions[c] - cfg.class_fractions[c]) <= 0.03);
}

TEST_CASE("outcome columns stay observed under heavy missingness") {
    auto cfg = small_config();
    cfg.missing_rate = 0.3;
    auto result = generate_cohort(cfg);
    const auto& table = result.table;
    std::size_t missing_covariates = 0;
    for (std::size_t p = 0; p < table.n_patients(); ++p)
        for (std::size_t t = 0; t < table.n_timepoints(); ++t)
            for (std::size_t a = 0; a < table.n_attributes(); ++a) {
                bool miss = is_missing(table.cell(p, t, a));
                if (a <= 4) {
                    CHECK_FALSE(miss);  // pain, JSW, and the replacement flag
                } else {
                    missing_covariates += miss ? 1 : 0;
                }
            }
    CHECK(missing_covariates > 0);

    cfg.missing_rate = 0.0;
    auto clean = generate_cohort(cfg);
    for (std::size_t p = 0; p < clean.table.n_patients(); ++p)
        for (std::size_t t = 0; t < clean.table.n_timepoints(); ++t)
            for (std::size_t a = 0; a < clean.table.n_attributes(); ++a)
                REQUIRE_FALSE(is_missing(clean.table.cell(p, t, a)));
}

TEST_CASE("missingness never perturbs the value stream") {
    auto cfg = small_config();
    auto with = generate_cohort(cfg);
    cfg.missing_rate = 0.0;
    auto without = generate_cohort(cfg);
    REQUIRE(with.archetypes == without.archetypes);
    std::size_t compared = 0;
    for (std::size_t p = 0; p < with.table.n_patients(); ++p)
        for (std::size_t t = 0; t < with.table.n_timepoints(); ++t)
            for (std::size_t a = 0; a < with.table.n_attributes(); ++a) {
                const Value& v = with.table.cell(p, t, a);
                if (is_missing(v)) continue;  // the only allowed difference
                REQUIRE(v == without.table.cell(p, t, a));
                ++compared;
            }
    CHECK(compared > 0);
}

TEST_CASE("the outcome-feature exclusion flag marks exactly the leaky columns") {
    auto cfg = small_config();
    auto plain = generate_cohort(cfg);
    for (const auto& attr : plain.table.attributes()) CHECK_FALSE(attr.excluded);

    cfg.exclude_outcome_features = true;
    auto masked = generate_cohort(cfg);
    for (const auto& attr : masked.table.attributes()) {
        bool leaky = attr.name.rfind("womac_pain", 0) == 0 || attr.name.rfind("min_jsw", 0) == 0 ||
                     attr.name == "knee_replaced" || attr.name.rfind("knee_pain", 0) == 0 ||
                     attr.name.rfind("crepitus", 0) == 0 || attr.name.rfind("osteophytes", 0) == 0 ||
                     attr.name.rfind("kl_grade", 0) == 0;
        CHECK(attr.excluded == leaky);
    }
}

TEST_CASE("a window-free design is a data error, not an empty cohort") {
    SynthConfig cfg;
    cfg.n_patients = 10;
    cfg.timepoints = {0, 1};  // every pair is shorter than the minimum window
    CHECK_THROWS_AS(generate_cohort(cfg), DataError);
}

TEST_CASE("the sidecar exports as a flat table") {
    auto cfg = small_config();
    auto result = generate_cohort(cfg);
    auto csv = sidecar_table(result);
    CHECK(csv.header == std::vector<std::string>{"patient", "start_timepoint", "end_timepoint",
                                                 "intended_label"});
    REQUIRE(csv.rows.size() == result.sidecar.size());
    CHECK(csv.rows[0][0] == result.sidecar[0].patient_id);
    CHECK(csv.rows[0][1] == std::to_string(result.sidecar[0].start_tp));
    CHECK(csv.rows[0][3] == class_name(result.sidecar[0].intended));
}
