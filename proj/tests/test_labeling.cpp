#include <catch2/catch_amalgamated.hpp>

#include "oaprog/labeling.hpp"

using namespace oaprog;

namespace {

PeriodRecord make_period(double years) {
    PeriodRecord rec;
    rec.patient_id = "P1";
    rec.start_tp = 0;
    rec.end_tp = static_cast<int>(years);
    rec.duration_years = years;
    return rec;
}

PeriodRecord pain_only(double start, double end, double years) {
    auto rec = make_period(years);
    rec.outcomes.pain_start_left = start;
    rec.outcomes.pain_end_left = end;
    rec.outcomes.jsw_start_left = 4.0;
    rec.outcomes.jsw_end_left = 4.0;  // no narrowing
    return rec;
}

PeriodRecord structure_only(double jsw_start, double jsw_end, double years) {
    auto rec = make_period(years);
    rec.outcomes.pain_start_left = 0.0;
    rec.outcomes.pain_end_left = 0.0;  // no pain change
    rec.outcomes.jsw_start_left = jsw_start;
    rec.outcomes.jsw_end_left = jsw_end;
    return rec;
}

}  // namespace

TEST_CASE("class and bit mappings are a bijection") {
    CHECK(class_from_bits(false, false) == ProgressionClass::N);
    CHECK(class_from_bits(true, false) == ProgressionClass::P);
    CHECK(class_from_bits(false, true) == ProgressionClass::S);
    CHECK(class_from_bits(true, true) == ProgressionClass::PS);
    for (int c = 0; c < 4; ++c) {
        auto cls = static_cast<ProgressionClass>(c);
        CHECK(class_from_bits(pain_bit(cls), structure_bit(cls)) == cls);
        CHECK(parse_class(class_name(cls)) == cls);
    }
    CHECK_FALSE(parse_class("Q").has_value());
}

TEST_CASE("sustained pain rise boundary: exactly 5 per year ending at exactly 40") {
    // 4-year window: 20 -> 40 is exactly 5/yr and ends exactly at the floor
    auto hit = label_period(pain_only(20, 40, 4));
    CHECK(hit.label == ProgressionClass::P);
    CHECK(hit.pain_rise_per_year == 5.0);

    // one point short on either conjunct fails
    CHECK(label_period(pain_only(20, 39, 4)).label == ProgressionClass::N);   // ends below floor
    CHECK(label_period(pain_only(21, 40, 4)).label == ProgressionClass::N);   // rise 4.75
}

TEST_CASE("rapid pain rise boundary: exactly 10 per year ending at exactly 35") {
    // 2-year window: 15 -> 35 is exactly 10/yr ending exactly at 35
    CHECK(label_period(pain_only(15, 35, 2)).label == ProgressionClass::P);
    CHECK(label_period(pain_only(15, 34, 2)).label == ProgressionClass::N);
    CHECK(label_period(pain_only(16, 35, 2)).label == ProgressionClass::N);  // rise 9.5
}

TEST_CASE("persistently high pain boundary: start and end exactly 40") {
    CHECK(label_period(pain_only(40, 40, 4)).label == ProgressionClass::P);
    CHECK(label_period(pain_only(39.9, 39.9, 4)).label == ProgressionClass::N);
    // high start with a falling score still counts while the end stays at 40
    CHECK(label_period(pain_only(80, 40, 4)).label == ProgressionClass::P);
    CHECK(label_period(pain_only(80, 39, 4)).label == ProgressionClass::N);
}

TEST_CASE("structural narrowing boundary: exactly 0.3 mm per year") {
    CHECK(label_period(structure_only(4.0, 2.8, 4)).label == ProgressionClass::S);   // 0.3/yr
    CHECK(label_period(structure_only(4.0, 2.84, 4)).label == ProgressionClass::N);  // 0.29/yr
    auto res = label_period(structure_only(4.0, 2.8, 4));
    CHECK(res.narrowing_per_year == Catch::Approx(0.3));
    CHECK(res.structure_knee == Knee::left);
}

TEST_CASE("structure follows the faster-narrowing knee; ties keep the left") {
    auto rec = make_period(4);
    rec.outcomes.pain_start_left = 0.0;
    rec.outcomes.pain_end_left = 0.0;
    rec.outcomes.jsw_start_left = 4.0;
    rec.outcomes.jsw_end_left = 3.6;   // 0.1/yr
    rec.outcomes.jsw_start_right = 4.0;
    rec.outcomes.jsw_end_right = 2.0;  // 0.5/yr
    auto res = label_period(rec);
    CHECK(res.label == ProgressionClass::S);
    CHECK(res.structure_knee == Knee::right);
    CHECK(res.narrowing_per_year == Catch::Approx(0.5));

    rec.outcomes.jsw_end_right = 3.6;  // both 0.1/yr
    auto tie = label_period(rec);
    CHECK(tie.structure_knee == Knee::left);
}

TEST_CASE("combined-max pain merges knees before judging the trajectory") {
    auto rec = make_period(4);
    rec.outcomes.jsw_start_left = 4.0;
    rec.outcomes.jsw_end_left = 4.0;
    // left end was never reported; the max at each visit still exists
    rec.outcomes.pain_start_left = 30.0;
    rec.outcomes.pain_start_right = 10.0;
    rec.outcomes.pain_end_right = 50.0;  // combined 30 -> 50: 5/yr, end >= 40
    CHECK(label_period(rec).label == ProgressionClass::P);

    rec.outcomes.pain_end_right = 35.0;  // combined 30 -> 35 fails every clause
    CHECK(label_period(rec).label == ProgressionClass::N);
}

TEST_CASE("combined and per-knee disagree on discordant knees") {
    // left slips just below the floor, right rises too slowly on its own,
    // yet the per-visit maximum stays at 40 throughout
    auto rec = make_period(4);
    rec.outcomes.jsw_start_left = 4.0;
    rec.outcomes.jsw_end_left = 4.0;
    rec.outcomes.pain_start_left = 40.0;
    rec.outcomes.pain_end_left = 39.0;
    rec.outcomes.pain_start_right = 25.0;
    rec.outcomes.pain_end_right = 40.0;  // 3.75/yr: below both rise clauses
    CHECK(label_period(rec).label == ProgressionClass::P);  // combined 40 -> 40

    LabelOptions per_knee;
    per_knee.pain_source = PainSource::per_knee;
    CHECK(label_period(rec, per_knee).label == ProgressionClass::N);

    // one knee qualifying alone is enough under per_knee
    rec.outcomes.pain_end_right = 45.0;  // right 25 -> 45: 5/yr, end >= 40
    auto res = label_period(rec, per_knee);
    CHECK(res.label == ProgressionClass::P);
    CHECK(res.pain_rise_per_year == Catch::Approx(5.0));
}

TEST_CASE("missing outcome measurements exclude instead of defaulting to N") {
    auto no_pain = make_period(4);
    no_pain.outcomes.jsw_start_left = 4.0;
    no_pain.outcomes.jsw_end_left = 4.0;
    auto r1 = label_period(no_pain);
    CHECK_FALSE(r1.label.has_value());
    CHECK(r1.reason == ExclusionReason::pain_unavailable);

    auto no_jsw = make_period(4);
    no_jsw.outcomes.pain_start_left = 10.0;
    no_jsw.outcomes.pain_end_left = 10.0;
    auto r2 = label_period(no_jsw);
    CHECK(r2.reason == ExclusionReason::structure_unavailable);

    auto r3 = label_period(make_period(4));
    CHECK(r3.reason == ExclusionReason::both_unavailable);

    // a pain endpoint missing on one side is fine under combined_max
    auto one_side = pain_only(40, 40, 4);
    one_side.outcomes.pain_start_right = std::nullopt;
    CHECK(label_period(one_side).label == ProgressionClass::P);
}

TEST_CASE("per-knee pain needs one knee with both endpoints") {
    auto rec = make_period(4);
    rec.outcomes.jsw_start_left = 4.0;
    rec.outcomes.jsw_end_left = 4.0;
    rec.outcomes.pain_start_left = 40.0;   // left end missing
    rec.outcomes.pain_end_right = 40.0;    // right start missing
    LabelOptions per_knee;
    per_knee.pain_source = PainSource::per_knee;
    auto res = label_period(rec, per_knee);
    CHECK(res.reason == ExclusionReason::pain_unavailable);
    // combined_max can still label it: max over present values on each side
    CHECK(label_period(rec).label == ProgressionClass::P);
}

TEST_CASE("both criteria firing yields PS") {
    auto rec = pain_only(40, 40, 4);
    rec.outcomes.jsw_start_left = 4.0;
    rec.outcomes.jsw_end_left = 2.0;  // 0.5/yr
    auto res = label_period(rec);
    CHECK(res.label == ProgressionClass::PS);
    CHECK(res.pain_progressed);
    CHECK(res.structure_progressed);
}

TEST_CASE("label_periods aggregates counts and exclusions") {
    std::vector<PeriodRecord> periods{
        pain_only(40, 40, 4),            // P
        structure_only(4.0, 2.0, 4),     // S
        pain_only(0, 0, 4),              // N
        make_period(4),                  // excluded: both unavailable
    };
    auto summary = label_periods(periods);
    REQUIRE(summary.labeled.size() == 3);
    CHECK(summary.class_counts[static_cast<std::size_t>(ProgressionClass::N)] == 1);
    CHECK(summary.class_counts[static_cast<std::size_t>(ProgressionClass::P)] == 1);
    CHECK(summary.class_counts[static_cast<std::size_t>(ProgressionClass::S)] == 1);
    CHECK(summary.class_counts[static_cast<std::size_t>(ProgressionClass::PS)] == 0);
    CHECK(summary.exclusions.at(ExclusionReason::both_unavailable) == 1);
    CHECK(summary.labeled[0].label == ProgressionClass::P);
}
